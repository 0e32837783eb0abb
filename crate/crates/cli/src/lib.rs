//! Experiment drivers behind the `dtanet` binary.

pub mod commands;
pub mod config;

pub use commands::{CliError, CliResult, Manifest};
pub use config::ExperimentConfig;
