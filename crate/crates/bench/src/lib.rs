//! Criterion benchmarks for the sampler building blocks; see `benches/`.
