//! Core types and evaluation machinery for structured semantic-anomaly
//! annotations of generated images.
//!
//! An anomaly is a quadruple of name, phenomenon, reasoning and a severity
//! score in `[0, 100]` (0 = completely implausible, 100 = fully realistic).
//! This crate holds the shared data model and its JSONL persistence, the
//! parser for the numbered structured-text format models emit, field-wise
//! similarity backends, the matching-based AP/F1 metric engine and the
//! generator audit metrics.

pub mod audit;
pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod parser;
pub mod similarity;

pub use error::{Error, Result, ValidationError};
pub use model::{
    AnomalyRecord, Decision, ImageAnnotation, PredictionSet, Provenance, SimilarityConfig,
    SourceLabel, ThresholdSet, Verdict, View,
};
