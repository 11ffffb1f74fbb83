//! Command-line front end: CSV ingestion, experiment drivers and JSON/CSV output.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;

pub use args::Cli;
pub use commands::{run, ResultDocument};
pub use error::CliError;
