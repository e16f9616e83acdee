//! Run summaries and the tabular side outputs of `solve`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use sdot_core::config::ConfigFile;
use sdot_core::driver::{IterationStats, RunResult};
use sdot_core::shifts::{GraphEdge, ShiftSet};
use sdot_core::wasserstein::{exact_reference, WassersteinReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinSummary {
    pub report: WassersteinReport,
    /// Known exact transport cost, when the config names a reference.
    pub exact: Option<f64>,
    /// `|P̃* - exact|`.
    pub error: Option<f64>,
}

/// Everything `solve` reports except wall times, so that reruns are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: String,
    pub config: ConfigFile,
    pub iterations: Vec<IterationStats>,
    pub shifts: Option<ShiftSet>,
    pub edges: Vec<GraphEdge>,
    pub wasserstein: Option<WassersteinSummary>,
    pub region_mass: Vec<f64>,
    pub unresolved_mass: f64,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn new(config: &ConfigFile, result: &RunResult) -> RunSummary {
        let wasserstein = result.wasserstein.clone().map(|report| {
            let exact = config.reference.map(exact_reference);
            let error = exact.map(|e| (report.p_tilde_star - e).abs());
            WassersteinSummary {
                report,
                exact,
                error,
            }
        });
        RunSummary {
            status: "ok".into(),
            config: config.clone(),
            iterations: result.iterations.clone(),
            shifts: config.toggles.emit_shifts.then(|| result.shifts.clone()),
            edges: result.edges.clone(),
            wasserstein,
            region_mass: result.region_mass.clone(),
            unresolved_mass: result.unresolved_mass,
            warnings: result.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<RunSummary> {
        serde_json::from_str(text)
    }
}

/// One row per target: index, coordinates, weight, shift, error bound.
pub fn shifts_csv(config: &ConfigFile, shifts: &ShiftSet) -> String {
    let targets = config.resolved_targets();
    let mut out = String::from("i");
    for a in 0..config.dim {
        write!(out, ",y{a}").unwrap();
    }
    out.push_str(",nu,a,error\n");
    for (i, t) in targets.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for v in &t.point {
            write!(out, ",{v}").unwrap();
        }
        writeln!(
            out,
            ",{},{},{}",
            t.weight, shifts.values[i], shifts.errors[i]
        )
        .unwrap();
    }
    out
}

pub fn timings_csv(result: &RunResult) -> String {
    let mut out = String::from("r,width,seconds\n");
    for (it, t) in result.iterations.iter().zip(&result.timings) {
        writeln!(out, "{},{},{t}", it.r, it.width).unwrap();
    }
    out
}

/// Final boundary boxes with their labels.
pub fn boundary_csv(result: &RunResult) -> String {
    let mut out = String::from("index,label,split,mass\n");
    for b in &result.boundary {
        let idx: Vec<String> = b.index.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{},{}", idx.join(" "), b.label, b.split, b.mass).unwrap();
    }
    out
}
