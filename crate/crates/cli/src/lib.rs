//! Batch front-end for the `mixbma` suites: `run`, `oracle` and `simulate`
//! driven by a TOML experiment file.

pub mod commands;
pub mod config;
pub mod error;
pub mod jsonfmt;

pub use commands::{cmd_oracle, cmd_run, cmd_simulate};
pub use config::{ExperimentConfig, LoadedConfig, Suite};
pub use error::CliError;
