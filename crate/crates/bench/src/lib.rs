//! Benchmarks live in `benches/`; `cargo bench -p stopflow-bench`.
