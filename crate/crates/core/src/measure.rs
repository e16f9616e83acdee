//! Piecewise closed-form source densities and exact box masses.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdotError};
use crate::geom::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PieceKind {
    Uniform,
    /// `prod_a x_a^t`, `t > 0`.
    Monomial {
        t: f64,
    },
    /// `exp(t * x_axis)`, `t != 0`.
    Exp {
        axis: usize,
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PieceRepr", into = "PieceRepr")]
pub struct DensityPiece {
    pub region: Rect,
    pub kind: PieceKind,
    pub coefficient: f64,
}

#[derive(Serialize, Deserialize)]
struct PieceRepr {
    region: Vec<f64>,
    #[serde(flatten)]
    kind: PieceKind,
    #[serde(default = "one")]
    coefficient: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<PieceRepr> for DensityPiece {
    type Error = String;
    fn try_from(r: PieceRepr) -> std::result::Result<Self, String> {
        if !r.region.len().is_multiple_of(2)
            || r.region.is_empty()
            || r.region.len() > 2 * crate::geom::MAX_DIM
        {
            return Err(format!(
                "region must list lo and hi corners, got {} numbers",
                r.region.len()
            ));
        }
        let d = r.region.len() / 2;
        Ok(DensityPiece {
            region: Rect::new(&r.region[..d], &r.region[d..]),
            kind: r.kind,
            coefficient: r.coefficient,
        })
    }
}

impl From<DensityPiece> for PieceRepr {
    fn from(p: DensityPiece) -> Self {
        let d = p.region.dim;
        let mut region = p.region.lo[..d].to_vec();
        region.extend_from_slice(&p.region.hi[..d]);
        PieceRepr {
            region,
            kind: p.kind,
            coefficient: p.coefficient,
        }
    }
}

impl DensityPiece {
    pub fn uniform(region: Rect, coefficient: f64) -> DensityPiece {
        DensityPiece {
            region,
            kind: PieceKind::Uniform,
            coefficient,
        }
    }

    /// Un-normalized mass over `rect`, clipped to the piece region.
    pub fn raw_mass(&self, rect: &Rect) -> f64 {
        match self.region.intersect(rect) {
            Some(r) => self.coefficient * separable_integral(self.kind, &r),
            None => 0.0,
        }
    }

    /// Un-normalized density value at `x` (zero outside the region).
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.region.dim;
        if (0..d).any(|a| x[a] < self.region.lo[a] || x[a] > self.region.hi[a]) {
            return 0.0;
        }
        self.coefficient
            * match self.kind {
                PieceKind::Uniform => 1.0,
                PieceKind::Monomial { t } => x[..d].iter().map(|v| v.powf(t)).product(),
                PieceKind::Exp { axis, t } => (t * x[axis]).exp(),
            }
    }

    /// Antiderivative `M` vanishing on the coordinate planes through the origin.
    pub fn antiderivative(&self, u: &Point) -> f64 {
        let d = self.region.dim;
        self.coefficient
            * match self.kind {
                PieceKind::Uniform => u[..d].iter().product(),
                PieceKind::Monomial { t } => {
                    u[..d].iter().map(|v| v.powf(t + 1.0)).product::<f64>()
                        / (t + 1.0).powi(d as i32)
                }
                PieceKind::Exp { axis, t } => (0..d)
                    .map(|a| {
                        if a == axis {
                            (t * u[a]).exp() / t
                        } else {
                            u[a]
                        }
                    })
                    .product(),
            }
    }

    /// Corner-difference mass over `rect` (clipped); used as a cross-check of
    /// the separable evaluation.
    pub fn corner_difference_mass(&self, rect: &Rect) -> f64 {
        let Some(r) = self.region.intersect(rect) else {
            return 0.0;
        };
        let d = r.dim;
        r.corners()
            .iter()
            .enumerate()
            .map(|(mask, c)| {
                let lows = d - (mask as u32).count_ones() as usize;
                let sign = if lows.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * self.antiderivative(c)
            })
            .sum()
    }

    fn validate(&self, domain: &Rect) -> Vec<String> {
        let mut errs = Vec::new();
        if self.region.dim != domain.dim {
            errs.push(format!(
                "density piece region has dimension {}, domain has {}",
                self.region.dim, domain.dim
            ));
            return errs;
        }
        if self.region.volume() <= 0.0 {
            errs.push(format!("density piece region {:?} is empty", self.region));
        }
        if !domain.contains_rect(&self.region) {
            errs.push("density piece region leaves the domain".to_string());
        }
        if !(self.coefficient.is_finite() && self.coefficient > 0.0) {
            errs.push(format!(
                "density coefficient must be positive, got {}",
                self.coefficient
            ));
        }
        match self.kind {
            PieceKind::Uniform => {}
            PieceKind::Monomial { t } => {
                if !(t.is_finite() && t > 0.0) {
                    errs.push(format!("monomial exponent must be positive, got {t}"));
                }
            }
            PieceKind::Exp { axis, t } => {
                if axis >= domain.dim {
                    errs.push(format!("exp axis {axis} out of range"));
                }
                if !(t.is_finite() && t != 0.0) {
                    errs.push(format!("exp rate must be nonzero, got {t}"));
                }
            }
        }
        errs
    }
}

/// Product of per-axis integrals of the piece's kernel over `r`.
fn separable_integral(kind: PieceKind, r: &Rect) -> f64 {
    (0..r.dim)
        .map(|a| {
            let (lo, hi) = (r.lo[a], r.hi[a]);
            match kind {
                PieceKind::Monomial { t } => (hi.powf(t + 1.0) - lo.powf(t + 1.0)) / (t + 1.0),
                PieceKind::Exp { axis, t } if axis == a => {
                    (t * lo).exp() * (t * (hi - lo)).exp_m1() / t
                }
                _ => hi - lo,
            }
        })
        .product()
}

/// Normalized piecewise density on the cube `[0, side]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    domain: Rect,
    pieces: Vec<DensityPiece>,
    z: f64,
}

impl Density {
    pub fn normalize(pieces: Vec<DensityPiece>, domain: Rect) -> Result<Density> {
        let mut errs = Vec::new();
        if pieces.is_empty() {
            errs.push("density needs at least one piece".to_string());
        }
        for p in &pieces {
            errs.extend(p.validate(&domain));
        }
        for (i, a) in pieces.iter().enumerate() {
            for b in &pieces[i + 1..] {
                if a.region.dim == b.region.dim && a.region.intersect(&b.region).is_some() {
                    errs.push("density piece regions overlap".to_string());
                }
            }
        }
        if !errs.is_empty() {
            return Err(SdotError::Config(errs));
        }
        let z: f64 = pieces.iter().map(|p| p.raw_mass(&p.region)).sum();
        if !(z.is_finite() && z > 0.0) {
            return Err(SdotError::InvalidInput(format!(
                "density normalization must be positive, got {z}"
            )));
        }
        Ok(Density { domain, pieces, z })
    }

    pub fn uniform(dim: usize, side: f64) -> Density {
        let domain = Rect::cube(dim, side);
        Density::normalize(vec![DensityPiece::uniform(domain, 1.0)], domain).unwrap()
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn normalization(&self) -> f64 {
        self.z
    }

    /// True when every piece is uniform.
    pub fn is_piecewise_uniform(&self) -> bool {
        self.pieces.iter().all(|p| p.kind == PieceKind::Uniform)
    }

    pub fn box_mass(&self, rect: &Rect) -> Result<f64> {
        self.check_inside(rect)?;
        Ok(self.mass(rect))
    }

    /// Unchecked mass; `rect` must lie in the domain.
    pub fn mass(&self, rect: &Rect) -> f64 {
        self.pieces.iter().map(|p| p.raw_mass(rect)).sum::<f64>() / self.z
    }

    /// Normalized density value at a point.
    pub fn value(&self, x: &[f64]) -> f64 {
        // Points on a shared face would otherwise be counted twice.
        self.pieces
            .iter()
            .map(|p| p.value(x))
            .find(|v| *v > 0.0)
            .unwrap_or(0.0)
            / self.z
    }

    /// Structural zero test: no positive piece meets `rect` with positive volume.
    pub fn is_zero_on(&self, rect: &Rect) -> bool {
        self.pieces
            .iter()
            .all(|p| p.region.intersect(rect).is_none())
    }

    fn check_inside(&self, rect: &Rect) -> Result<()> {
        if rect.dim != self.domain.dim {
            return Err(SdotError::DimensionMismatch {
                expected: self.domain.dim,
                got: rect.dim,
            });
        }
        let slack = 1e-12 * self.domain.hi[0];
        for a in 0..rect.dim {
            if rect.lo[a] < -slack
                || rect.hi[a] > self.domain.hi[a] + slack
                || rect.lo[a] > rect.hi[a]
            {
                return Err(SdotError::InvalidInput(format!(
                    "box {:?}..{:?} lies outside the domain",
                    rect.lo, rect.hi
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Rect {
        Rect::cube(2, 1.0)
    }

    #[test]
    fn normalize_examples() {
        let d = Density::normalize(vec![DensityPiece::uniform(unit(), 1.0)], unit()).unwrap();
        assert_eq!(d.normalization(), 1.0);
        let half = Rect::new(&[0.5, 0.0], &[1.0, 1.0]);
        let d = Density::normalize(vec![DensityPiece::uniform(half, 4.0 / 3.0)], unit()).unwrap();
        assert!((d.normalization() - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.value(&[0.75, 0.5]) - 2.0).abs() < 1e-15);
        assert!((d.mass(&unit()) - 1.0).abs() < 1e-12);
        let m = DensityPiece {
            region: unit(),
            kind: PieceKind::Monomial { t: 1.0 },
            coefficient: 1.0,
        };
        let d = Density::normalize(vec![m], unit()).unwrap();
        assert!((d.normalization() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_bad_pieces() {
        let bad = DensityPiece::uniform(Rect::new(&[0.5, 0.5], &[1.5, 1.0]), 1.0);
        assert!(matches!(
            Density::normalize(vec![bad], unit()),
            Err(SdotError::Config(_))
        ));
        let neg = DensityPiece::uniform(unit(), -1.0);
        assert!(Density::normalize(vec![neg], unit()).is_err());
        assert!(Density::normalize(vec![], unit()).is_err());
    }

    #[test]
    fn box_mass_examples() {
        let d = Density::uniform(2, 1.0);
        let w = 1.0 / 16.0;
        let b = Rect::new(&[3.0 * w, 7.0 * w], &[4.0 * w, 8.0 * w]);
        assert!((d.box_mass(&b).unwrap() - 0.00390625).abs() < 1e-17);

        let mono = DensityPiece {
            region: unit(),
            kind: PieceKind::Monomial { t: 1.0 },
            coefficient: 1.0,
        };
        let q = Rect::new(&[0.5, 0.5], &[1.0, 1.0]);
        assert!((mono.corner_difference_mass(&q) - 0.140625).abs() < 1e-15);
        assert!((mono.raw_mass(&q) - 0.140625).abs() < 1e-15);

        let ex = DensityPiece {
            region: unit(),
            kind: PieceKind::Exp { axis: 0, t: 1.0 },
            coefficient: 1.0,
        };
        let e1 = std::f64::consts::E - 1.0;
        assert!((ex.corner_difference_mass(&unit()) - e1).abs() < 1e-14);
        assert!((ex.raw_mass(&unit()) - e1).abs() < 1e-14);
    }

    #[test]
    fn box_mass_rejects_outside() {
        let d = Density::uniform(2, 1.0);
        assert!(d.box_mass(&Rect::new(&[0.5, 0.5], &[1.5, 1.0])).is_err());
    }

    #[test]
    fn zero_predicate() {
        let zq = zero_quadrant();
        assert!(zq.is_zero_on(&Rect::new(&[0.1, 0.1], &[0.3, 0.4])));
        assert!(!Density::uniform(2, 1.0).is_zero_on(&Rect::new(&[0.1, 0.1], &[0.3, 0.4])));
        assert!(!zq.is_zero_on(&Rect::new(&[0.25, 0.25], &[0.75, 0.5])));
        assert!(zq.is_zero_on(&Rect::new(&[0.0, 0.0], &[0.5, 0.5])));
    }

    fn zero_quadrant() -> Density {
        let pieces = vec![
            DensityPiece::uniform(Rect::new(&[0.5, 0.0], &[1.0, 1.0]), 4.0 / 3.0),
            DensityPiece::uniform(Rect::new(&[0.0, 0.5], &[0.5, 1.0]), 4.0 / 3.0),
        ];
        Density::normalize(pieces, unit()).unwrap()
    }

    #[test]
    fn piece_serde_roundtrip() {
        let p = DensityPiece {
            region: unit(),
            kind: PieceKind::Exp { axis: 1, t: -2.0 },
            coefficient: 3.0,
        };
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"kind\":\"exp\""));
        let back: DensityPiece = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let u: DensityPiece =
            serde_json::from_str(r#"{"region":[0,0,1,1],"kind":"uniform"}"#).unwrap();
        assert_eq!(u.coefficient, 1.0);
    }
}
