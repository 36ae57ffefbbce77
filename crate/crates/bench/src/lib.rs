//! Criterion benchmarks for the metaview pipeline live in `benches/`.
