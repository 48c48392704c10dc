//! Command-line layer for the SHKS simulator: configuration, subcommand dispatch and file output.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli, RunError};
pub use config::{ConfigFileError, RunConfig};
pub use output::RunManifest;
