//! Command-line front end for the streaming learners: generate synthetic
//! streams, run a set of learners over a stream, compare their traces.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;
