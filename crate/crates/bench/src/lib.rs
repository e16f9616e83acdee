//! Criterion benchmarks for the boundary method live under `benches/`.
