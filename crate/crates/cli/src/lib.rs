//! Experiment orchestration for the factual error correction toolkit.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, RunSummary, Stage, StageError};
pub use report::{report, ReportTable};
