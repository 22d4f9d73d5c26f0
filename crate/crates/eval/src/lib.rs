//! Blind human evaluation of corrections.
//!
//! Tasks are sampled per system, shuffled so raters cannot tell systems apart,
//! and a fixed share is assigned to two raters for agreement. Ratings follow a
//! three-question cascade (intelligible, supported, corrected) enforced on write.

pub mod http;
pub mod model;
pub mod service;
pub mod sim;
pub mod stats;
pub mod store;

pub use model::{create_batch, Batch, BatchConfig, EvalTask, Q3Answer, Question, Rating, RatingSubmission, SystemOutput, SystemOutputs, TaskView, YesNo};
pub use service::{EvalService, Progress};
pub use stats::{cohen_kappa, AggregateReport, AgreementReport, Kappa, ScoringMode};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid rating: {0}")]
    Validation(String),
    #[error("task {task_id} already rated by {rater}")]
    Conflict { task_id: u32, rater: String },
    #[error("unknown rater {0:?}")]
    UnknownRater(String),
    #[error("unknown task {0}")]
    UnknownTask(u32),
    #[error("task {task_id} is not assigned to {rater}")]
    NotAssigned { task_id: u32, rater: String },
    #[error("no task carries two ratings")]
    NoOverlap,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad stored data: {0}")]
    Format(String),
}
