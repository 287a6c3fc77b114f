//! Configuration, external-objective bridge and experiment runner behind the
//! `bgo` command.

pub mod bridge;
pub mod config;
pub mod experiment;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, RunError, RunSummary};
