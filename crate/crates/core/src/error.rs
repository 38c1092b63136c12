use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single broken type invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    Json { line: usize, message: String },

    #[error("line {line}: image `{image_id}`: {source}")]
    Invalid {
        line: usize,
        image_id: String,
        #[source]
        source: ValidationError,
    },

    #[error("line {line}: duplicate image_id `{image_id}`")]
    DuplicateImageId { line: usize, image_id: String },

    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error("predictions reference unknown image ids: {}", .0.join(", "))]
    UnknownImageIds(Vec<String>),

    #[error("duplicate prediction sets for image ids: {}", .0.join(", "))]
    DuplicatePredictions(Vec<String>),

    #[error("missing source labels for image ids: {}", .0.join(", "))]
    MissingLabels(Vec<String>),

    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,

    #[error("unparseable source answer")]
    UnparseableSourceAnswer,

    #[error(transparent)]
    Similarity(#[from] crate::similarity::SimilarityError),

    #[error("similarity backend failed for prediction {pred} vs ground truth {gt}: {source}")]
    PairScoring {
        pred: usize,
        gt: usize,
        #[source]
        source: crate::similarity::SimilarityError,
    },

    #[error("report serialization: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
