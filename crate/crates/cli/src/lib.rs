//! Driver for the bifstep analyses: configuration, commands and CSV output.

pub mod commands;
pub mod config;
pub mod csv;

pub use commands::CliError;
pub use config::{ConfigError, RunConfig};
