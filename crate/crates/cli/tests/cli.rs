use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdot_cli::commands::{partition, preset, solve};
use sdot_cli::image::{color, render};
use sdot_cli::summary::RunSummary;
use sdot_core::config::{presets, ConfigFile, TargetSpec};
use sdot_core::cost::GroundCost;
use sdot_core::geom::point;
use sdot_core::shifts::{reconstruct_partition, Raster};

fn sdot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdot"))
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sdot-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bundled_configs_match_presets() {
    let mut seen = 0;
    for (name, cfg) in presets::all() {
        let path = configs_dir().join(format!("{name}.toml"));
        let text =
            std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(ConfigFile::parse(&text).unwrap(), cfg, "{name}");
        assert_eq!(text, cfg.to_toml(), "{name}");
        seen += 1;
    }
    let files = std::fs::read_dir(configs_dir()).unwrap().count();
    assert_eq!(seen, files);
}

#[test]
fn summary_roundtrips_through_json() {
    let (summary, _) = solve(&presets::grid4x4(7)).unwrap();
    let text = summary.to_json();
    let back = RunSummary::from_json(&text).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.to_json(), text);
    assert!(summary.wasserstein.as_ref().unwrap().error.unwrap() > 0.0);
}

#[test]
fn solve_writes_outputs() {
    let dir = scratch("solve");
    let out = sdot(&["solve", "--config", "nwse", "--out", dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary =
        RunSummary::from_json(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let error = summary.wasserstein.unwrap().error.unwrap();
    assert!((error - 8.42e-6).abs() < 0.05e-6, "{error}");
    let shifts = std::fs::read_to_string(dir.join("shifts.csv")).unwrap();
    assert_eq!(shifts.lines().count(), 3);
    assert!(dir.join("timings.csv").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn reference_values_print() {
    let out = sdot(&["oracle", "reference", "grid4x4"]);
    let v: f64 = String::from_utf8(out.stdout)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert_eq!(v, (2f64.sqrt() + 1f64.asinh()) / 24.0);
}

fn error_category(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = scratch("errors");
    let bad = dir.join("bad.toml");
    let mut cfg = presets::nwse(6);
    cfg.targets[0].weight = 0.7;
    std::fs::write(&bad, cfg.to_toml()).unwrap();
    let out = sdot(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_category(&out), "config");
    let message: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(
        message["message"].as_str().unwrap().contains("weight"),
        "{message}"
    );

    let unknown = dir.join("unknown.toml");
    std::fs::write(&unknown, presets::nwse(6).to_toml() + "\nbogus = 1\n").unwrap();
    assert_eq!(
        sdot(&["solve", "--config", unknown.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let out = sdot(&[
        "solve",
        "--config",
        dir.join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_category(&out), "io");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn transport_oracle_from_json() {
    let dir = scratch("transport");
    let file = dir.join("t.json");
    std::fs::write(&file, r#"{"costs": [[1, 2], [2, 1], [3, 3]], "masses": [0.5, 0.3, 0.2], "capacities": [0.6, 0.4]}"#).unwrap();
    let out = sdot(&["oracle", "transport", "--file", file.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["cost"].as_f64().unwrap() - 1.4).abs() < 1e-12);
    std::fs::remove_dir_all(dir).unwrap();
}

fn l2sq_raster(targets: &[[f64; 2]], resolution: usize) -> Raster {
    let points: Vec<_> = targets.iter().map(|t| point(t)).collect();
    reconstruct_partition(
        &vec![0.0; targets.len()],
        &GroundCost::l2_squared(),
        &points,
        2,
        1.0,
        resolution,
    )
}

#[test]
fn symmetric_pair_splits_along_anti_diagonal() {
    let raster = l2sq_raster(&[[0.25, 0.25], [0.75, 0.75]], 64);
    let image = render(&raster, None);
    assert_eq!(image.distinct_colors(), 2);
    for row in 0..64 {
        for col in 0..64 {
            // Row 0 is the top of the square; diagonal cells tie and go to 0.
            let below = col + (63 - row) <= 63;
            let expected = if below { color(0) } else { color(1) };
            assert_eq!(image.pixel(col, row), expected, "({col}, {row})");
        }
    }
}

#[test]
fn single_target_is_solid() {
    let image = render(&l2sq_raster(&[[0.3, 0.6]], 32), None);
    assert_eq!(image.distinct_colors(), 1);
    assert_eq!(image.pixel(0, 0), color(0));

    let mut cfg = presets::nwse(6);
    cfg.targets = vec![TargetSpec {
        point: vec![0.3, 0.6],
        weight: 1.0,
    }];
    assert!(cfg.to_run_config().is_err());
}

#[test]
fn partition_image_is_deterministic() {
    let cfg = preset("zero_quadrant").unwrap();
    let (a, _) = partition(&cfg, 96, true).unwrap();
    let (b, _) = partition(&cfg, 96, true).unwrap();
    assert_eq!(a.to_ppm(), b.to_ppm());
    assert!(a.to_ppm().starts_with(b"P6\n96 96\n255\n"));
}

/// Number of 4-connected pieces of each label.
fn pieces(labels: &[u32], r: usize, n: usize) -> Vec<usize> {
    let mut seen = vec![false; labels.len()];
    let mut count = vec![0; n];
    for start in 0..labels.len() {
        if seen[start] {
            continue;
        }
        let l = labels[start];
        count[l as usize] += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let (i, j) = (k / r, k % r);
            let mut visit = |ni: usize, nj: usize| {
                let q = ni * r + nj;
                if !seen[q] && labels[q] == l {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                visit(i - 1, j);
            }
            if i + 1 < r {
                visit(i + 1, j);
            }
            if j > 0 {
                visit(i, j - 1);
            }
            if j + 1 < r {
                visit(i, j + 1);
            }
        }
    }
    count
}

#[test]
fn five_point_regions_are_contiguous_and_balanced() {
    let (image, raster) = partition(&presets::five_point_l2(9), 512, false).unwrap();
    assert_eq!(image.distinct_colors(), 5);
    assert_eq!(pieces(&raster.labels, 512, 5), vec![1; 5]);
    for i in 0..5u32 {
        let share = raster.labels.iter().filter(|&&l| l == i).count() as f64 / (512.0 * 512.0);
        assert!((share - 0.2).abs() <= 0.02, "region {i}: {share}");
    }
}
