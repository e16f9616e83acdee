use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sdot_core::auction::{self, EpsSchedule, TransportProblem};
use sdot_core::config::presets;
use sdot_core::driver::run;

fn five_point(c: &mut Criterion) {
    let mut group = c.benchmark_group("five_point_l2");
    group.sample_size(10);
    for m in 8..=11u32 {
        let rc = presets::five_point_l2(m).to_run_config().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(1u64 << m), &rc, |b, rc| {
            b.iter(|| run(rc).unwrap())
        });
    }
    group.finish();
}

fn cube(c: &mut Criterion) {
    let mut group = c.benchmark_group("cube5");
    group.sample_size(10);
    for m in 4..=5u32 {
        let rc = presets::cube5(m).to_run_config().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(1u64 << m), &rc, |b, rc| {
            b.iter(|| run(rc).unwrap())
        });
    }
    group.finish();
}

fn auction_cold(c: &mut Criterion) {
    let (m, n) = (4096usize, 16usize);
    let costs: Vec<f64> = (0..m * n)
        .map(|k| ((k * 7919) % 1009) as f64 / 1009.0)
        .collect();
    let p = TransportProblem::new(vec![1.0 / m as f64; m], vec![1.0 / n as f64; n], costs).unwrap();
    c.bench_function("auction_4096x16", |b| {
        b.iter(|| auction::solve(&p, None, EpsSchedule::standard(&p)).unwrap())
    });
}

criterion_group!(benches, five_point, cube, auction_cold);
criterion_main!(benches);
