//! Benchmark-only crate: all substance lives in `benches/pipeline.rs`.
//! Run with `cargo bench -p segcascade-bench`.
