//! Criterion benchmarks for the resampling, tiling and evaluation kernels; see `benches/`.
