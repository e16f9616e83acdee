//! Versioned TOML run configurations and the bundled presets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostTerm, Exponent, GroundCost};
use crate::driver::{RunConfig, Toggles};
use crate::error::{Result, SdotError};
use crate::geom::{point, Rect};
use crate::measure::{Density, DensityPiece, PieceKind};
use crate::wasserstein::ReferenceProblem;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub point: Vec<f64>,
    pub weight: f64,
}

/// Uniformly placed targets with equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTargets {
    pub count: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn four() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub dim: usize,
    #[serde(default = "one")]
    pub side: f64,
    #[serde(default = "four")]
    pub w1_exp: u32,
    pub target_exp: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub toggles: Toggles,
    pub cost: Vec<CostTerm>,
    pub density: Vec<DensityPiece>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_targets: Option<RandomTargets>,
    /// Problem with a known exact transport cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceProblem>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| SdotError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<ConfigFile> {
        ConfigFile::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolved target list: explicit ones or the seeded random draw.
    pub fn resolved_targets(&self) -> Vec<TargetSpec> {
        match &self.random_targets {
            Some(rt) if self.targets.is_empty() => {
                let mut rng = ChaCha8Rng::seed_from_u64(rt.seed);
                (0..rt.count)
                    .map(|_| TargetSpec {
                        point: (0..self.dim)
                            .map(|_| rng.gen_range(0.0..self.side))
                            .collect(),
                        weight: 1.0 / rt.count as f64,
                    })
                    .collect()
            }
            _ => self.targets.clone(),
        }
    }

    /// Validates everything and lists every violation at once.
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!(
                "unsupported config version {}; expected {CONFIG_VERSION}",
                self.version
            ));
        }
        if !(1..=crate::geom::MAX_DIM).contains(&self.dim) {
            errs.push(format!(
                "dimension must be 1..={}, got {}",
                crate::geom::MAX_DIM,
                self.dim
            ));
            return Err(SdotError::Config(errs));
        }
        if !(self.side.is_finite() && self.side > 0.0) {
            errs.push(format!("side must be positive, got {}", self.side));
            return Err(SdotError::Config(errs));
        }
        if !self.targets.is_empty() && self.random_targets.is_some() {
            errs.push("give either targets or random_targets, not both".into());
        }
        let cost = match GroundCost::new(self.cost.clone()) {
            Ok(c) => Some(c),
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        };
        let density =
            match Density::normalize(self.density.clone(), Rect::cube(self.dim, self.side)) {
                Ok(d) => Some(d),
                Err(SdotError::Config(v)) => {
                    errs.extend(v);
                    None
                }
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            };
        let targets = self.resolved_targets();
        for (i, t) in targets.iter().enumerate() {
            if t.point.len() != self.dim {
                errs.push(format!(
                    "target {i} has {} coordinates, expected {}",
                    t.point.len(),
                    self.dim
                ));
            }
        }
        let (Some(cost), Some(density)) = (cost, density) else {
            return Err(SdotError::Config(errs));
        };
        if !errs.is_empty() {
            return Err(SdotError::Config(errs));
        }
        let rc = RunConfig {
            name: self.name.clone(),
            dim: self.dim,
            side: self.side,
            w1_exp: self.w1_exp,
            target_exp: self.target_exp,
            cost,
            density,
            targets: targets.iter().map(|t| point(&t.point)).collect(),
            weights: targets.iter().map(|t| t.weight).collect(),
            toggles: self.toggles,
            seed: self.seed,
        };
        rc.validate()?;
        Ok(rc)
    }
}

/// Bundled problem definitions. The five-point target positions are
/// approximate.
pub mod presets {
    use super::*;

    fn term(k: f64, p: f64, q: f64) -> CostTerm {
        CostTerm {
            k,
            p: Exponent::Finite(p),
            q,
        }
    }

    fn base(
        name: &str,
        dim: usize,
        target_exp: u32,
        cost: Vec<CostTerm>,
        density: Vec<DensityPiece>,
    ) -> ConfigFile {
        ConfigFile {
            version: CONFIG_VERSION,
            name: name.into(),
            note: String::new(),
            dim,
            side: 1.0,
            w1_exp: 4,
            target_exp,
            seed: 0,
            toggles: Toggles::default(),
            cost,
            density,
            targets: Vec::new(),
            random_targets: None,
            reference: None,
        }
    }

    fn uniform(dim: usize) -> Vec<DensityPiece> {
        vec![DensityPiece::uniform(Rect::cube(dim, 1.0), 1.0)]
    }

    fn equal_weights(points: &[[f64; 2]]) -> Vec<TargetSpec> {
        let w = 1.0 / points.len() as f64;
        points
            .iter()
            .map(|p| TargetSpec {
                point: p.to_vec(),
                weight: w,
            })
            .collect()
    }

    /// Two targets on the NW-SE diagonal.
    pub fn nwse(target_exp: u32) -> ConfigFile {
        let mut c = base("nwse", 2, target_exp, vec![term(1.0, 2.0, 1.0)], uniform(2));
        c.targets = equal_weights(&[[0.25, 0.75], [0.75, 0.25]]);
        c.reference = Some(ReferenceProblem::Nwse);
        c
    }

    /// Sixteen targets at the centers of a 4x4 tiling.
    pub fn grid4x4(target_exp: u32) -> ConfigFile {
        let mut c = base(
            "grid4x4",
            2,
            target_exp,
            vec![term(1.0, 2.0, 1.0)],
            uniform(2),
        );
        let pts: Vec<[f64; 2]> = (0..16)
            .map(|k| [0.125 + 0.25 * (k / 4) as f64, 0.125 + 0.25 * (k % 4) as f64])
            .collect();
        c.targets = equal_weights(&pts);
        c.reference = Some(ReferenceProblem::Grid4x4);
        c
    }

    pub const FIVE_POINTS: [[f64; 2]; 5] = [
        [0.15, 0.80],
        [0.85, 0.85],
        [0.33, 0.62],
        [0.14, 0.16],
        [0.72, 0.08],
    ];

    /// Five targets, uniform source; `cost` defaults to Euclidean.
    pub fn five_point(cost: Vec<CostTerm>, target_exp: u32) -> ConfigFile {
        let mut c = base("five_point", 2, target_exp, cost, uniform(2));
        c.note = "approximate target coordinates".into();
        c.targets = equal_weights(&FIVE_POINTS);
        c
    }

    pub fn five_point_l2(target_exp: u32) -> ConfigFile {
        five_point(vec![term(1.0, 2.0, 1.0)], target_exp)
    }

    /// Zero density on the lower-left quadrant, 4/3 elsewhere.
    pub fn zero_quadrant(target_exp: u32) -> ConfigFile {
        let density = vec![
            DensityPiece::uniform(Rect::new(&[0.5, 0.0], &[1.0, 1.0]), 4.0 / 3.0),
            DensityPiece::uniform(Rect::new(&[0.0, 0.5], &[0.5, 1.0]), 4.0 / 3.0),
        ];
        let mut c = base(
            "zero_quadrant",
            2,
            target_exp,
            vec![term(1.0, 2.0, 1.0)],
            density,
        );
        c.note = "approximate target coordinates".into();
        c.targets = equal_weights(&FIVE_POINTS);
        c
    }

    /// Source density proportional to x1 * x2.
    pub fn mu_xy(target_exp: u32) -> ConfigFile {
        let density = vec![DensityPiece {
            region: Rect::cube(2, 1.0),
            kind: PieceKind::Monomial { t: 1.0 },
            coefficient: 0.25,
        }];
        let mut c = base("mu_xy", 2, target_exp, vec![term(1.0, 2.0, 1.0)], density);
        c.note = "approximate target coordinates".into();
        c.targets = equal_weights(&FIVE_POINTS);
        c
    }

    /// Gallery costs by name.
    pub fn lp_gallery_costs() -> Vec<(&'static str, Vec<CostTerm>)> {
        vec![
            ("l1", vec![term(1.0, 1.0, 1.0)]),
            ("l10", vec![term(1.0, 10.0, 1.0)]),
            (
                "linf",
                vec![CostTerm {
                    k: 1.0,
                    p: Exponent::Infinity,
                    q: 1.0,
                }],
            ),
            ("l2sq", vec![term(1.0, 2.0, 2.0)]),
            ("lhalf", vec![term(1.0, 0.5, 1.0)]),
            (
                "mixed",
                vec![term(4.0, 2.0, 28.0 / 5.0), term(61.0, 0.5, 1.0)],
            ),
        ]
    }

    pub fn lp_gallery(variant: &str, target_exp: u32) -> Option<ConfigFile> {
        let (_, cost) = lp_gallery_costs()
            .into_iter()
            .find(|(n, _)| *n == variant)?;
        let mut c = five_point(cost, target_exp);
        c.name = format!("lp_gallery_{variant}");
        Some(c)
    }

    /// Five seeded random targets in the unit cube.
    pub fn cube5(target_exp: u32) -> ConfigFile {
        let mut c = base(
            "cube5",
            3,
            target_exp,
            vec![term(1.0, 2.0, 1.0)],
            uniform(3),
        );
        c.w1_exp = 3;
        c.random_targets = Some(RandomTargets { count: 5, seed: 5 });
        c
    }

    /// Every bundled config under its file stem.
    pub fn all() -> Vec<(String, ConfigFile)> {
        let mut v = vec![
            ("nwse".to_string(), nwse(9)),
            ("grid4x4".to_string(), grid4x4(9)),
            ("five_point".to_string(), five_point_l2(9)),
            ("zero_quadrant".to_string(), zero_quadrant(8)),
            ("mu_xy".to_string(), mu_xy(8)),
            ("cube5".to_string(), cube5(6)),
        ];
        for (name, _) in lp_gallery_costs() {
            v.push((format!("lp_gallery_{name}"), lp_gallery(name, 8).unwrap()));
        }
        v
    }
}
