//! Experiment runner for `dvrf-core`: JSON configs, scenario execution, CSV
//! and SVG artifacts in self-describing run directories.

pub mod config;
pub mod error;
pub mod run;
pub mod scenarios;
pub mod svg;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};
pub use run::{run_config, run_path, RunOptions, RunOutcome};
