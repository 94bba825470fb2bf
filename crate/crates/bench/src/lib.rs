//! Criterion benchmarks for the sampler and PDE kernels; see `benches/`.
