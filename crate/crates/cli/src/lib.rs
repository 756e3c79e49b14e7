//! Command implementations behind the `vocaltrack` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use error::{CliError, CliResult};
