//! Criterion benchmarks for the flow, heat kernel and kernel stages; see `benches/`.
