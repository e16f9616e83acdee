//! Ground costs built as positive combinations of `l_p^q` terms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdotError};

/// The `p` of an `l_p` function. Infinity is its own variant so that
/// `d^(1/p)` never has to be formed from a huge float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Num(f64),
    Word(String),
}

impl TryFrom<ExponentRepr> for Exponent {
    type Error = String;
    fn try_from(r: ExponentRepr) -> std::result::Result<Self, String> {
        match r {
            ExponentRepr::Num(p) => Ok(Exponent::Finite(p)),
            ExponentRepr::Word(w) if w.eq_ignore_ascii_case("inf") => Ok(Exponent::Infinity),
            ExponentRepr::Word(w) => {
                Err(format!("exponent must be a number or \"inf\", got {w:?}"))
            }
        }
    }
}

impl From<Exponent> for ExponentRepr {
    fn from(e: Exponent) -> Self {
        match e {
            Exponent::Finite(p) => ExponentRepr::Num(p),
            Exponent::Infinity => ExponentRepr::Word("inf".into()),
        }
    }
}

/// One term `k * ||x - y||_p^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub k: f64,
    pub p: Exponent,
    pub q: f64,
}

impl CostTerm {
    pub fn new(k: f64, p: Exponent, q: f64) -> Result<CostTerm> {
        let t = CostTerm { k, p, q };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(SdotError::InvalidInput(format!(
                "cost coefficient k must be positive, got {}",
                self.k
            )));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(SdotError::InvalidInput(format!(
                "cost exponent q must be positive, got {}",
                self.q
            )));
        }
        if let Exponent::Finite(p) = self.p {
            if !(p.is_finite() && p > 0.0) {
                return Err(SdotError::InvalidInput(format!(
                    "cost exponent p must be positive, got {p}"
                )));
            }
        }
        Ok(())
    }

    /// True when the term is `k * l_p^p` with finite `p`.
    pub fn is_power_of_own_norm(&self) -> bool {
        matches!(self.p, Exponent::Finite(p) if p == self.q)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let v = match self.p {
            Exponent::Infinity => {
                let m = x
                    .iter()
                    .zip(y)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                powf(m, self.q)
            }
            Exponent::Finite(p) if p == self.q => {
                // l_p^p sums per-axis powers directly, which keeps l_2^2 exact
                // enough for affine identities.
                x.iter().zip(y).map(|(a, b)| powf((a - b).abs(), p)).sum()
            }
            Exponent::Finite(1.0) => {
                let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                powf(s, self.q)
            }
            Exponent::Finite(2.0) => {
                let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if self.q == 1.0 {
                    s.sqrt()
                } else {
                    powf(s, 0.5 * self.q)
                }
            }
            Exponent::Finite(p) => {
                let s: f64 = x.iter().zip(y).map(|(a, b)| powf((a - b).abs(), p)).sum();
                powf(s, self.q / p)
            }
        };
        self.k * v
    }

    fn neighbor_bound(&self, width: f64, d: usize) -> f64 {
        let reach = match self.p {
            Exponent::Infinity => width,
            Exponent::Finite(p) => width * (d as f64).powf(1.0 / p),
        };
        self.k * reach.powf(self.q)
    }
}

#[inline]
fn powf(base: f64, e: f64) -> f64 {
    if e == 1.0 {
        base
    } else if e == 2.0 {
        base * base
    } else if base == 0.0 {
        0.0
    } else {
        base.powf(e)
    }
}

/// Admissible ground cost `c(x, y) = sum_s k_s ||x - y||_{p_s}^{q_s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CostTerm>", into = "Vec<CostTerm>")]
pub struct GroundCost {
    terms: Vec<CostTerm>,
}

impl TryFrom<Vec<CostTerm>> for GroundCost {
    type Error = SdotError;
    fn try_from(terms: Vec<CostTerm>) -> Result<Self> {
        GroundCost::new(terms)
    }
}

impl From<GroundCost> for Vec<CostTerm> {
    fn from(c: GroundCost) -> Self {
        c.terms
    }
}

impl GroundCost {
    pub fn new(terms: Vec<CostTerm>) -> Result<GroundCost> {
        if terms.is_empty() {
            return Err(SdotError::InvalidInput(
                "ground cost needs at least one term".into(),
            ));
        }
        for t in &terms {
            t.validate()?;
        }
        Ok(GroundCost { terms })
    }

    pub fn lp_q(k: f64, p: f64, q: f64) -> GroundCost {
        GroundCost::new(vec![CostTerm::new(k, Exponent::Finite(p), q).unwrap()]).unwrap()
    }

    /// Euclidean distance.
    pub fn l2() -> GroundCost {
        GroundCost::lp_q(1.0, 2.0, 1.0)
    }

    pub fn l2_squared() -> GroundCost {
        GroundCost::lp_q(1.0, 2.0, 2.0)
    }

    pub fn l1() -> GroundCost {
        GroundCost::lp_q(1.0, 1.0, 1.0)
    }

    pub fn linf() -> GroundCost {
        GroundCost::new(vec![CostTerm::new(1.0, Exponent::Infinity, 1.0).unwrap()]).unwrap()
    }

    pub fn terms(&self) -> &[CostTerm] {
        &self.terms
    }

    /// A single `l_p` term with `q = 1` and `p >= 1`, i.e. a genuine norm.
    pub fn is_norm(&self) -> bool {
        match self.terms.as_slice() {
            [t] => {
                t.q == 1.0
                    && match t.p {
                        Exponent::Infinity => true,
                        Exponent::Finite(p) => p >= 1.0,
                    }
            }
            _ => false,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(SdotError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.cost(x, y))
    }

    /// Unchecked evaluation; both slices must have the same length.
    #[inline]
    pub fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.terms.as_slice() {
            [t] => t.eval(x, y),
            ts => ts.iter().map(|t| t.eval(x, y)).sum(),
        }
    }

    /// `g_ij(x) = c(x, y_i) - c(x, y_j)`.
    pub fn g_ij(&self, x: &[f64], yi: &[f64], yj: &[f64]) -> Result<f64> {
        if x.len() != yi.len() || x.len() != yj.len() {
            let got = if x.len() != yi.len() {
                yi.len()
            } else {
                yj.len()
            };
            return Err(SdotError::DimensionMismatch {
                expected: x.len(),
                got,
            });
        }
        Ok(self.cost(x, yi) - self.cost(x, yj))
    }

    /// Upper bound on the cost between two neighboring grid points at `width`.
    pub fn neighbor_cost_bound(&self, width: f64, d: usize) -> f64 {
        self.terms.iter().map(|t| t.neighbor_bound(width, d)).sum()
    }

    /// Statistical check of symmetry, positivity and collinear monotonicity.
    pub fn admissibility_probe(&self, dim: usize, sample_count: usize, seed: u64) -> ProbeReport {
        const TOL: f64 = 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        for n in 0..sample_count {
            let x = sample(&mut rng);
            let y = sample(&mut rng);
            let cxx = self.cost(&x, &x);
            if cxx.abs() > TOL {
                return ProbeReport::fail(n, format!("c(x,x) = {cxx:e} at x = {x:?}"));
            }
            let cxy = self.cost(&x, &y);
            let cyx = self.cost(&y, &x);
            if (cxy - cyx).abs() > TOL {
                return ProbeReport::fail(
                    n,
                    format!("c(x,y) = {cxy} but c(y,x) = {cyx} at x = {x:?}, y = {y:?}"),
                );
            }
            if x != y && cxy <= 0.0 {
                return ProbeReport::fail(
                    n,
                    format!("c(x,y) = {cxy} for distinct x = {x:?}, y = {y:?}"),
                );
            }
            // Collinear triple x1, x3 on the line through x2 with direction u.
            let u = sample(&mut rng);
            let mut t1: f64 = rng.gen_range(-1.0..1.0);
            let mut t3: f64 = rng.gen_range(-1.0..1.0);
            if t1.abs() > t3.abs() {
                std::mem::swap(&mut t1, &mut t3);
            }
            let x1: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t1 * b).collect();
            let x3: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + t3 * b).collect();
            let (c1, c3) = (self.cost(&x, &x1), self.cost(&x, &x3));
            if c1 > c3 + TOL {
                return ProbeReport::fail(
                    n,
                    format!("monotonicity: c(x2,x1) = {c1} > c(x2,x3) = {c3} with |t1| <= |t3|"),
                );
            }
        }
        ProbeReport {
            passed: true,
            samples: sample_count,
            counterexample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub passed: bool,
    pub samples: usize,
    pub counterexample: Option<String>,
}

impl ProbeReport {
    fn fail(sample: usize, msg: String) -> ProbeReport {
        ProbeReport {
            passed: false,
            samples: sample + 1,
            counterexample: Some(msg),
        }
    }
}
