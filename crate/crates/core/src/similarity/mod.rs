//! Field-wise text similarity and the three comparison views.
//!
//! A [`SimilarityBackend`] scores a hypothesis text against a reference text
//! in `[0, 1]`. Two implementations ship here: the deterministic token-overlap
//! [`SurrogateBackend`] and the HTTP [`RemoteBackend`] that talks to a
//! BERTScore sidecar. [`view_similarity`] combines per-field scores into the
//! phenomenon, reasoning and α-weighted full views.

mod cache;
mod remote;
mod surrogate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{text_hash, CacheEntry, CacheKey, ScoreCache};
pub use remote::{RemoteBackend, RemoteConfig, ScoreRequest, ScoreResponse};
pub use surrogate::{surrogate_score, tokenize, SurrogateBackend, SURROGATE_BACKEND_ID};

use crate::model::{AnomalyRecord, SimilarityConfig, View};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("scoring pair {pair_index} failed after {attempts} attempt(s): {message}")]
    Transport {
        pair_index: usize,
        attempts: u32,
        message: String,
    },

    #[error("scoring protocol error at pair {pair_index}: {message}")]
    Protocol { pair_index: usize, message: String },

    #[error("score cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// A text similarity in `[0, 1]`.
///
/// Implementations must be deterministic for a fixed configuration, return 1
/// for identical non-empty texts and clamp their output to `[0, 1]`.
pub trait SimilarityBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn score(&self, hypothesis: &str, reference: &str) -> Result<f64, SimilarityError>;

    /// Score many pairs at once. Backends with per-request overhead override
    /// this; the default scores pairs one by one.
    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, SimilarityError> {
        pairs.iter().map(|(h, r)| self.score(h, r)).collect()
    }
}

impl<B: SimilarityBackend + ?Sized> SimilarityBackend for &B {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn score(&self, hypothesis: &str, reference: &str) -> Result<f64, SimilarityError> {
        (**self).score(hypothesis, reference)
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, SimilarityError> {
        (**self).score_batch(pairs)
    }
}

pub fn clamp_unit(score: f64) -> f64 {
    if score.is_nan() {
        0.0
    } else {
        score.clamp(0.0, 1.0)
    }
}

/// Similarities of one prediction/ground-truth pair under all three views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub phe: f64,
    pub rea: f64,
    pub full: f64,
}

impl ViewScore {
    pub fn from_fields(phe: f64, rea: f64, alpha: f64) -> Self {
        Self {
            phe,
            rea,
            full: mix(phe, rea, alpha),
        }
    }

    pub fn get(&self, view: View) -> f64 {
        match view {
            View::Phe => self.phe,
            View::Rea => self.rea,
            View::Full => self.full,
        }
    }
}

/// `alpha * phe + (1 - alpha) * rea`.
pub fn mix(phe: f64, rea: f64, alpha: f64) -> f64 {
    alpha * phe + (1.0 - alpha) * rea
}

/// Compare a predicted anomaly with a ground-truth one. Only the phenomenon
/// and reasoning fields are scored.
pub fn view_similarity(
    pred: &AnomalyRecord,
    gt: &AnomalyRecord,
    cfg: &SimilarityConfig,
    backend: &dyn SimilarityBackend,
) -> Result<ViewScore, SimilarityError> {
    let scores = backend.score_batch(&[
        (pred.phenomenon.as_str(), gt.phenomenon.as_str()),
        (pred.reasoning.as_str(), gt.reasoning.as_str()),
    ])?;
    Ok(ViewScore::from_fields(
        clamp_unit(scores[0]),
        clamp_unit(scores[1]),
        cfg.alpha,
    ))
}
