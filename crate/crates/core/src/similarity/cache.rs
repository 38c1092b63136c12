use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimilarityError;

/// Hex SHA-256 of a text, used as its cache identity.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// One line of the on-disk cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend_id: String,
    pub h_hash: String,
    pub r_hash: String,
    pub score: f64,
}

pub type CacheKey = (String, String, String);

/// Concurrent score cache keyed by `(backend_id, hash(h), hash(r))`.
///
/// Values are deterministic per key, so concurrent inserts of the same key are
/// harmless and the last write wins.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<HashMap<CacheKey, f64>>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Cache backed by a JSONL file; existing entries are loaded.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SimilarityError> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| cache_err(&path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| cache_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| cache_err(&path, format!("line {}: {e}", i + 1)))?;
                entries.insert((entry.backend_id, entry.h_hash, entry.r_hash), entry.score);
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            path: Some(path),
        })
    }

    pub fn key(backend_id: &str, hypothesis: &str, reference: &str) -> CacheKey {
        (
            backend_id.to_string(),
            text_hash(hypothesis),
            text_hash(reference),
        )
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.entries.read().expect("cache lock").get(key).copied()
    }

    pub fn insert(&self, key: CacheKey, score: f64) {
        self.entries.write().expect("cache lock").insert(key, score);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write every entry back to the backing file, sorted by key. No-op for
    /// in-memory caches.
    pub fn flush(&self) -> Result<(), SimilarityError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let mut rows: Vec<CacheEntry> = self
            .entries
            .read()
            .expect("cache lock")
            .iter()
            .map(|((b, h, r), &score)| CacheEntry {
                backend_id: b.clone(),
                h_hash: h.clone(),
                r_hash: r.clone(),
                score,
            })
            .collect();
        rows.sort_by(|a, b| {
            (&a.backend_id, &a.h_hash, &a.r_hash).cmp(&(&b.backend_id, &b.h_hash, &b.r_hash))
        });
        let file = File::create(path).map_err(|e| cache_err(path, e))?;
        let mut w = BufWriter::new(file);
        for row in rows {
            serde_json::to_writer(&mut w, &row).map_err(|e| cache_err(path, e))?;
            w.write_all(b"\n").map_err(|e| cache_err(path, e))?;
        }
        w.flush().map_err(|e| cache_err(path, e))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

fn cache_err(path: &Path, e: impl std::fmt::Display) -> SimilarityError {
    SimilarityError::Cache {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
