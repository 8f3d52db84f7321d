//! Criterion benchmarks for coinlab; see `benches/`.
