//! Criterion benchmarks for the hot paths live in `benches/pipeline.rs`:
//! flow estimation, the detector's forward and backward passes, AUC and the
//! compression simulator.
