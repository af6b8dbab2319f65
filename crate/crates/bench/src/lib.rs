//! Criterion benchmarks for the norm oracles; see `benches/`.
