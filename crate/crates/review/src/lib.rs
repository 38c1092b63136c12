//! Human screening of agent-proposed anomalies.
//!
//! Each candidate is shown to an annotator who answers accept, reject or
//! unsure. Verdicts go to an append-only JSONL log; the review queue is
//! rebuilt from the candidate set and that log, so replaying the log always
//! reproduces the same state. Finalization keeps exactly the candidates whose
//! latest verdict is accept.

pub mod finalize;
pub mod log;
pub mod queue;
pub mod server;

pub use finalize::{finalize, FinalizeMode, FinalizeReport, ImageCounts};
pub use log::VerdictLog;
pub use queue::{ItemId, Progress, QueueItem, ReviewQueue};
pub use server::{router, ReviewService};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("verdict log {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("verdict log line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("no candidate ({image_id}, {anomaly_index})")]
    UnknownItem { image_id: String, anomaly_index: usize },
    #[error("annotator_id must not be empty")]
    EmptyAnnotator,
    #[error("{} candidates have no verdict: {}", .0.len(), .0.iter().map(|(i, k)| format!("{i}#{k}")).collect::<Vec<_>>().join(", "))]
    Pending(Vec<(String, usize)>),
    #[error("duplicate image_id `{0}` in the candidate set")]
    DuplicateImage(String),
}
