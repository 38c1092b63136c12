use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use super::{clamp_unit, CacheKey, ScoreCache, SimilarityBackend, SimilarityError};

/// Request body: `{"pairs": [[hypothesis, reference], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<(String, String)>,
}

/// Response body: `{"scores": [f, ...]}`, one score per requested pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub backend_id: String,
    /// Retries after the first failed attempt.
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff: Duration,
    pub timeout: Duration,
    pub batch_size: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            backend_id: "bertscore:distilbert-base-uncased".into(),
            max_retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(60),
            batch_size: 64,
        }
    }
}

/// BERTScore F1 served over HTTP, with a shared score cache.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    cache: Arc<ScoreCache>,
    requests: AtomicUsize,
}

enum Attempt {
    Retryable(String),
    Fatal(SimilarityError),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, cache: Arc<ScoreCache>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            cache,
            requests: AtomicUsize::new(0),
        }
    }

    /// Number of HTTP requests issued so far, including failed attempts.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &Arc<ScoreCache> {
        &self.cache
    }

    fn post_once(&self, body: &ScoreRequest, first_index: usize) -> Result<Vec<Value>, Attempt> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut resp = self
            .agent
            .post(&self.config.endpoint)
            .send_json(body)
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retryable(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(SimilarityError::Protocol {
                pair_index: first_index,
                message: format!("HTTP {status}"),
            }));
        }
        let parsed: ScoreResponse = resp.body_mut().read_json().map_err(|e| {
            Attempt::Fatal(SimilarityError::Protocol {
                pair_index: first_index,
                message: format!("undecodable response: {e}"),
            })
        })?;
        Ok(parsed.scores)
    }

    fn post_with_retries(
        &self,
        body: &ScoreRequest,
        first_index: usize,
    ) -> Result<Vec<Value>, SimilarityError> {
        let mut delay = self.config.backoff;
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.post_once(body, first_index) {
                Ok(scores) => return Ok(scores),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => {
                    warn!(attempt, endpoint = %self.config.endpoint, "scoring request failed: {msg}");
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        Err(SimilarityError::Transport {
            pair_index: first_index,
            attempts,
            message: last,
        })
    }
}

impl SimilarityBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.config.backend_id
    }

    fn score(&self, hypothesis: &str, reference: &str) -> Result<f64, SimilarityError> {
        Ok(self.score_batch(&[(hypothesis, reference)])?[0])
    }

    fn score_batch(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, SimilarityError> {
        let mut out: Vec<Option<f64>> = vec![None; pairs.len()];
        // unique uncached keys, in first-seen order, with every index sharing them
        let mut pending: Vec<(CacheKey, Vec<usize>)> = Vec::new();
        let mut slot_of: HashMap<CacheKey, usize> = HashMap::new();
        for (i, (h, r)) in pairs.iter().enumerate() {
            let key = ScoreCache::key(&self.config.backend_id, h, r);
            if let Some(score) = self.cache.get(&key) {
                out[i] = Some(score);
                continue;
            }
            match slot_of.get(&key) {
                Some(&slot) => pending[slot].1.push(i),
                None => {
                    slot_of.insert(key.clone(), pending.len());
                    pending.push((key, vec![i]));
                }
            }
        }

        for chunk in pending.chunks(self.config.batch_size.max(1)) {
            let first_index = chunk[0].1[0];
            let body = ScoreRequest {
                pairs: chunk
                    .iter()
                    .map(|(_, idx)| {
                        let (h, r) = pairs[idx[0]];
                        (h.to_string(), r.to_string())
                    })
                    .collect(),
            };
            let scores = self.post_with_retries(&body, first_index)?;
            if scores.len() != chunk.len() {
                return Err(SimilarityError::Protocol {
                    pair_index: first_index,
                    message: format!("expected {} scores, got {}", chunk.len(), scores.len()),
                });
            }
            for ((key, indices), value) in chunk.iter().zip(scores) {
                let score = value.as_f64().ok_or_else(|| SimilarityError::Protocol {
                    pair_index: indices[0],
                    message: format!("non-numeric score {value}"),
                })?;
                let score = clamp_unit(score);
                self.cache.insert(key.clone(), score);
                for &i in indices {
                    out[i] = Some(score);
                }
            }
        }

        Ok(out.into_iter().map(|s| s.expect("every pair scored")).collect())
    }
}
