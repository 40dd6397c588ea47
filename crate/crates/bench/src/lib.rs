//! Criterion benchmarks for the forward model, the network proxy and one
//! delayed-acceptance step. Run with `cargo bench -p gwda-bench`.
