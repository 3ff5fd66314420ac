//! Criterion benchmarks for the courier dispatching laboratory live in `benches/`.
