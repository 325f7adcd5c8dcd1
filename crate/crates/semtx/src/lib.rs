//! Experiment driver for multi-level semantic feature transmission: config
//! files, run directories, metrics tables and the `semtx` command line.

pub mod commands;
pub mod error;
pub mod files;
pub mod tables;

pub use error::{exit, AppError, AppResult};
