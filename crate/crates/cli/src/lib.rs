//! Command-line front end: configuration, run orchestration, CSV and SVG
//! output.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod setup;

pub use commands::Status;
pub use config::{ConfigError, RunConfig, CONFIG_SCHEMA};
