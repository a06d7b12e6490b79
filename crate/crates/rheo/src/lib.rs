//! File formats and commands around `rheo-core`: dataset and model files,
//! optimizer traces, TOML run configuration, and the `generate`, `train` and
//! `eval` commands behind the `rheo` binary.

pub mod atomic;
pub mod commands;
pub mod config;
pub mod dataset_csv;
pub mod error;
pub mod model_file;
pub mod trace_csv;

pub use error::{CliError, Result};
