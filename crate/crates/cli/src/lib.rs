//! Command-line front end of `pmlkit`: JSON configs in, JSON reports and
//! CSV files out.

pub mod commands;
pub mod config;
pub mod report;

pub use config::Config;
pub use report::CliError;
