//! The review queue: a pure function of the candidate set and the verdict log.
//!
//! Items are every `(image_id, anomaly_index)` in the candidate set in that
//! order. An item is pending until some verdict names it; the latest verdict
//! for an item governs. `next_item` hands out items under per-annotator
//! leases so two annotators working at once never receive the same pending
//! item, and repeated calls by one annotator return the same item until that
//! annotator decides it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use anomkit_core::{AnomalyRecord, Decision, ImageAnnotation, Verdict};
use serde::Serialize;

use crate::ReviewError;

pub type ItemId = (String, usize);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueItem {
    pub image_id: String,
    pub anomaly_index: usize,
    pub anomaly: AnomalyRecord,
    pub image_uri: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub total: usize,
    pub pending: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unsure: usize,
}

/// How long an unanswered lease keeps an item away from other annotators.
pub const DEFAULT_LEASE: Duration = Duration::from_secs(15 * 60);

pub struct ReviewQueue {
    images: BTreeMap<String, ImageAnnotation>,
    items: Vec<ItemId>,
    latest: HashMap<ItemId, Verdict>,
    decided_by: HashMap<String, HashSet<ItemId>>,
    leases: HashMap<ItemId, (String, Instant)>,
    lease_ttl: Duration,
}

impl ReviewQueue {
    /// Build the queue from candidates and replay `log` over it. Verdicts
    /// naming items outside the candidate set are ignored.
    pub fn new(annotations: Vec<ImageAnnotation>, log: &[Verdict]) -> Result<Self, ReviewError> {
        let mut images = BTreeMap::new();
        for a in annotations {
            if images.contains_key(&a.image_id) {
                return Err(ReviewError::DuplicateImage(a.image_id));
            }
            images.insert(a.image_id.clone(), a);
        }
        let items = images
            .values()
            .flat_map(|a| (0..a.anomalies.len()).map(|i| (a.image_id.clone(), i)))
            .collect();
        let mut q = Self {
            images,
            items,
            latest: HashMap::new(),
            decided_by: HashMap::new(),
            leases: HashMap::new(),
            lease_ttl: DEFAULT_LEASE,
        };
        for v in log {
            if q.contains(&v.image_id, v.anomaly_index) {
                q.apply(v.clone());
            }
        }
        Ok(q)
    }

    pub fn with_lease_ttl(mut self, ttl: Duration) -> Self {
        self.lease_ttl = ttl;
        self
    }

    pub fn contains(&self, image_id: &str, anomaly_index: usize) -> bool {
        self.images
            .get(image_id)
            .is_some_and(|a| anomaly_index < a.anomalies.len())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn annotations(&self) -> impl Iterator<Item = &ImageAnnotation> {
        self.images.values()
    }

    pub fn image_uri(&self, image_id: &str) -> Option<&str> {
        self.images.get(image_id).map(|a| a.image_uri.as_str())
    }

    /// Latest verdict per decided item.
    pub fn latest(&self) -> &HashMap<ItemId, Verdict> {
        &self.latest
    }

    pub fn is_pending(&self, item: &ItemId) -> bool {
        !self.latest.contains_key(item)
    }

    pub fn pending(&self) -> Vec<ItemId> {
        self.items.iter().filter(|i| self.is_pending(i)).cloned().collect()
    }

    fn apply(&mut self, v: Verdict) {
        let id = (v.image_id.clone(), v.anomaly_index);
        self.decided_by
            .entry(v.annotator_id.clone())
            .or_default()
            .insert(id.clone());
        self.leases.remove(&id);
        self.latest.insert(id, v);
    }

    /// Validate and apply a verdict already durably logged by the caller.
    pub fn record(&mut self, v: Verdict) -> Result<(), ReviewError> {
        self.check(&v)?;
        self.apply(v);
        Ok(())
    }

    /// Reject verdicts for unknown items or without an annotator.
    pub fn check(&self, v: &Verdict) -> Result<(), ReviewError> {
        if v.annotator_id.trim().is_empty() {
            return Err(ReviewError::EmptyAnnotator);
        }
        if !self.contains(&v.image_id, v.anomaly_index) {
            return Err(ReviewError::UnknownItem {
                image_id: v.image_id.clone(),
                anomaly_index: v.anomaly_index,
            });
        }
        Ok(())
    }

    fn item(&self, id: &ItemId) -> QueueItem {
        let a = &self.images[&id.0];
        QueueItem {
            image_id: id.0.clone(),
            anomaly_index: id.1,
            anomaly: a.anomalies[id.1].clone(),
            image_uri: a.image_uri.clone(),
        }
    }

    /// The next item for `annotator`, or `None` when nothing is left for them.
    pub fn next_item(&mut self, annotator: &str) -> Option<QueueItem> {
        self.next_item_at(annotator, Instant::now())
    }

    pub fn next_item_at(&mut self, annotator: &str, now: Instant) -> Option<QueueItem> {
        // an outstanding lease is returned again: reads are idempotent
        let held = self
            .items
            .iter()
            .find(|id| matches!(self.leases.get(*id), Some((who, _)) if who == annotator) && self.is_pending(id))
            .cloned();
        if let Some(id) = held {
            self.leases.insert(id.clone(), (annotator.to_string(), now));
            return Some(self.item(&id));
        }
        let mine = self.decided_by.get(annotator);
        let id = self
            .items
            .iter()
            .find(|id| {
                self.is_pending(id)
                    && !mine.is_some_and(|m| m.contains(*id))
                    && match self.leases.get(*id) {
                        None => true,
                        Some((_, at)) => now.duration_since(*at) >= self.lease_ttl,
                    }
            })?
            .clone();
        self.leases.insert(id.clone(), (annotator.to_string(), now));
        Some(self.item(&id))
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            total: self.items.len(),
            ..Progress::default()
        };
        for id in &self.items {
            match self.latest.get(id).map(|v| v.decision) {
                None => p.pending += 1,
                Some(Decision::Accept) => p.accepted += 1,
                Some(Decision::Reject) => p.rejected += 1,
                Some(Decision::Unsure) => p.unsure += 1,
            }
        }
        p
    }
}
