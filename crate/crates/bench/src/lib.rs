//! Criterion benchmarks for the arrowhead and dense eigensolvers and for windowed p_e evaluation.
//!
//! Run with `cargo bench -p poincare-bench`.
