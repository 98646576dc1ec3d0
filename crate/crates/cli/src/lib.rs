//! Configuration, artifact formats and subcommands behind the `nemflex` binary.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;

pub use config::{LoadedConfig, RunConfig};
pub use error::{CliError, CliResult};
