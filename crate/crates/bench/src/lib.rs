//! Benchmarks for `bmcoll`; see `benches/`.
