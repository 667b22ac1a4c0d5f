//! Configuration-driven benchmark sweeps and their CSV outputs.

pub mod cache;
pub mod config;
pub mod report;
mod run;

pub use config::{Algorithm, AlgorithmGrid, Cell, ChainInit, CoverageTarget, ExperimentConfig, Scale};
pub use run::{run_benchmark, run_seed, task_bundle, write_outputs, BenchmarkOutput};
