//! Criterion benchmarks for `stark-lattice-core`; see `benches/`.
