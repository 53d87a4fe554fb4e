//! Command-line front end for `mixflow-core`: JSON experiment configs,
//! checkpoint files, CSV exports and a rayon executor.

pub mod cli;
pub mod config;
pub mod controller;
pub mod error;
pub mod exec;

pub use cli::run;
pub use error::{CliError, Result};
