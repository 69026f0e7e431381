//! Benchmark-only crate; see `benches/rolling.rs`.
