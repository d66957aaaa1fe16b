//! Benchmark harness for per-query L_p nearest-neighbor search: index
//! builds, ground truth, query workloads, parameter sweeps, the verification
//! ablation, and distance-kernel timing. Every table is written as CSV.

pub mod cli;
pub mod corpus;
pub mod experiments;
pub mod record;
pub mod workload;
