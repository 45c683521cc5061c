//! Benchmarks for the sensitivity pipeline live in `benches/`.
