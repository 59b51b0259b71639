//! Configuration-driven experiments over the `pinning-core` modules, with
//! reproducible, checksummed output directories.

pub mod config;
pub mod output;
pub mod runner;
pub mod svg;
pub mod sweep;

pub use config::{ConfigErrors, ExperimentConfig, ExperimentKind};
pub use runner::{run_experiment, run_seed, HarnessError, RunOptions, RunSummary};
