//! Command-line front end for the dose-response modelling library: data
//! ingestion, run configuration and the `rsm` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::{CliError, Result};
