//! Reproducible experiment runner: TOML config in, CSV/JSON artifacts out.

pub mod config;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{execute, run_experiment, Outcome, Pipeline};
