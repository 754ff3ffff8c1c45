//! Benchmark-only crate; the measurements live in `benches/hotpaths.rs`.
