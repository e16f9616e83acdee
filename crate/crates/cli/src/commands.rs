//! The work behind each subcommand, separated from argument parsing.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Deserialize;

use sdot_core::config::{presets, ConfigFile};
use sdot_core::driver::{run, RunResult};
use sdot_core::geom::Rect;
use sdot_core::oracle::{
    brute_force_transport, riemann_integral, DenseTransportInstance, OraclePlan,
};
use sdot_core::shifts::{reconstruct_partition, Raster};
use sdot_core::wasserstein::box_cost_integral;
use sdot_core::{Result, SdotError};

use crate::fit::{power_fit, PowerFit};
use crate::image::{render, Pixmap};
use crate::summary::{boundary_csv, shifts_csv, timings_csv, RunSummary};

pub fn preset(name: &str) -> Option<ConfigFile> {
    presets::all()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, c)| c)
}

/// A preset name or a path to a config file.
pub fn resolve_config(spec: &str) -> Result<ConfigFile> {
    match preset(spec) {
        Some(c) if !Path::new(spec).exists() => Ok(c),
        _ => ConfigFile::load(Path::new(spec)),
    }
}

pub fn solve(config: &ConfigFile) -> Result<(RunSummary, RunResult)> {
    let rc = config.to_run_config()?;
    let result = run(&rc)?;
    Ok((RunSummary::new(config, &result), result))
}

/// Writes `summary.json`, `timings.csv` and, per the toggles, `shifts.csv`
/// and `boundary.csv` into `out`.
pub fn write_solve_outputs(
    out: &Path,
    config: &ConfigFile,
    summary: &RunSummary,
    result: &RunResult,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.json"), summary.to_json())?;
    std::fs::write(out.join("timings.csv"), timings_csv(result))?;
    if let Some(s) = &summary.shifts {
        std::fs::write(out.join("shifts.csv"), shifts_csv(config, s))?;
    }
    if config.toggles.emit_partition {
        std::fs::write(out.join("boundary.csv"), boundary_csv(result))?;
    }
    Ok(())
}

pub fn partition_raster(
    config: &ConfigFile,
    result: &RunResult,
    resolution: usize,
) -> Result<Raster> {
    if resolution == 0 {
        return Err(SdotError::InvalidInput(
            "resolution must be positive".into(),
        ));
    }
    let rc = config.to_run_config()?;
    Ok(reconstruct_partition(
        &result.shifts.values,
        &rc.cost,
        &rc.targets,
        rc.dim,
        rc.side,
        resolution,
    ))
}

pub fn partition(
    config: &ConfigFile,
    resolution: usize,
    shade_zero: bool,
) -> Result<(Pixmap, Raster)> {
    let (_, result) = solve(config)?;
    let raster = partition_raster(config, &result, resolution)?;
    let rc = config.to_run_config()?;
    let image = render(&raster, shade_zero.then_some((&rc.density, rc.side)));
    Ok((image, raster))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    /// Cells per unit length at the final level.
    pub w: u64,
    pub n: usize,
    pub seconds: f64,
    pub peak_boxes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub time_fit: Option<PowerFit>,
    pub storage_fit: Option<PowerFit>,
}

/// Runs `config` at final widths `2^-m` for each `m`, keeping the fastest
/// of `repeats` runs.
pub fn bench(config: &ConfigFile, widths: &[u32], repeats: usize) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &m in widths {
        let mut c = config.clone();
        c.target_exp = m;
        let rc = c.to_run_config()?;
        let mut best = f64::INFINITY;
        let mut peak = 0;
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            let r = run(&rc)?;
            best = best.min(t.elapsed().as_secs_f64());
            peak = r
                .iterations
                .iter()
                .map(|i| i.active_boxes)
                .max()
                .unwrap_or(0);
        }
        rows.push(BenchRow {
            w: 1u64 << m,
            n: rc.n(),
            seconds: best,
            peak_boxes: peak,
        });
    }
    let w: Vec<f64> = rows.iter().map(|r| r.w as f64).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.peak_boxes as f64).collect();
    Ok(BenchReport {
        time_fit: power_fit(&w, &t),
        storage_fit: power_fit(&w, &s),
        rows,
    })
}

pub fn bench_csv(report: &BenchReport) -> String {
    let mut out = String::from("W,N,seconds,peak_boxes\n");
    for r in &report.rows {
        writeln!(out, "{},{},{},{}", r.w, r.n, r.seconds, r.peak_boxes).unwrap();
    }
    out
}

/// Parses `9..12` (inclusive) or a comma list.
pub fn parse_widths(s: &str) -> Result<Vec<u32>> {
    let bad =
        || SdotError::InvalidInput(format!("bad width list '{s}'; use e.g. 9..12 or 9,10,11"));
    let v: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u32, u32) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

/// Closed-form and Riemann values of `∫ c(z, y_target) dμ(z)` over the domain.
pub fn oracle_integral(
    config: &ConfigFile,
    target: usize,
    depth: u32,
) -> Result<(Option<f64>, f64)> {
    let rc = config.to_run_config()?;
    let y = *rc
        .targets
        .get(target)
        .ok_or_else(|| SdotError::InvalidInput(format!("no target {target}")))?;
    let domain = Rect::cube(rc.dim, rc.side);
    let closed = match box_cost_integral(&rc.cost, &rc.density, &domain, &y[..rc.dim]) {
        Ok(v) => Some(v),
        Err(SdotError::Unavailable) => None,
        Err(e) => return Err(e),
    };
    let d = rc.dim;
    let f = |z: &sdot_core::geom::Point| rc.cost.cost(&z[..d], &y[..d]) * rc.density.value(&z[..d]);
    Ok((closed, riemann_integral(&f, &domain, depth)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportJson {
    costs: Vec<Vec<f64>>,
    masses: Vec<f64>,
    capacities: Vec<f64>,
}

/// Exact transport optimum of a JSON instance `{costs, masses, capacities}`.
pub fn oracle_transport(text: &str) -> Result<OraclePlan> {
    let t: TransportJson =
        serde_json::from_str(text).map_err(|e| SdotError::Parse(e.to_string()))?;
    brute_force_transport(&DenseTransportInstance::new(
        t.costs,
        t.masses,
        t.capacities,
    )?)
}
