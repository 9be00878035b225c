//! Criterion benchmarks for the routing core; see `benches/`.
