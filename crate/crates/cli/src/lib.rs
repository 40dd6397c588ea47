//! Experiment driver: synthetic data, surrogate training, multi-chain
//! sampling and diagnostics, each persisting its artifacts and a manifest
//! under one output directory.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{ExperimentConfig, KernelKind, Strategy};
pub use error::{CliError, CliResult};
