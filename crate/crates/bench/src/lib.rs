//! Criterion benchmarks for the hot kernels of `gdstab-core`; see
//! `benches/kernels.rs`. Run with `cargo bench -p gdstab-bench`.
