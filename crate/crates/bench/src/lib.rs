//! Criterion benchmarks for seqtag-core; see `benches/`.
