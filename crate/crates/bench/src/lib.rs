//! Criterion benchmarks for split finding, ensemble training and prediction live under `benches/`.
