//! Criterion benchmarks for the modeling pipeline; see `benches/pipeline.rs`.
