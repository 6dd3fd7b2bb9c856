//! Command-line front end: configuration, commands and report rendering.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{run, write_outputs, CliError};
pub use config::RunConfig;
