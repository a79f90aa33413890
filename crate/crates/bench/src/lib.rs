//! Criterion benchmarks for the cbolab kernels; see `benches/`.
