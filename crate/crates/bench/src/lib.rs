//! Criterion benchmarks for `linoptic`; see `benches/`.
