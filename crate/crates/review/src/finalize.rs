//! Final annotation set: the candidates whose latest verdict is accept.

use std::collections::HashMap;

use anomkit_core::{Decision, ImageAnnotation, Provenance, Verdict};
use serde::Serialize;

use crate::queue::ItemId;
use crate::ReviewError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FinalizeMode {
    /// Every candidate must have a verdict.
    #[default]
    Strict,
    /// Candidates without a verdict are dropped.
    Partial,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImageCounts {
    pub image_id: String,
    pub before: usize,
    pub after: usize,
    pub rejected: usize,
    pub unsure: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalizeReport {
    pub annotations: Vec<ImageAnnotation>,
    pub per_image: Vec<ImageCounts>,
    /// Items answered unsure: excluded like rejects, listed for audit.
    pub unsure: Vec<ItemId>,
    pub dropped_pending: Vec<ItemId>,
}

impl FinalizeReport {
    pub fn mean_before(&self) -> f64 {
        mean(self.per_image.iter().map(|c| c.before))
    }

    pub fn mean_after(&self) -> f64 {
        mean(self.per_image.iter().map(|c| c.after))
    }

    pub fn total_before(&self) -> usize {
        self.per_image.iter().map(|c| c.before).sum()
    }

    pub fn total_after(&self) -> usize {
        self.per_image.iter().map(|c| c.after).sum()
    }
}

fn mean(xs: impl Iterator<Item = usize>) -> f64 {
    let (mut n, mut s) = (0usize, 0usize);
    for x in xs {
        n += 1;
        s += x;
    }
    if n == 0 {
        0.0
    } else {
        s as f64 / n as f64
    }
}

/// Keep each candidate whose latest verdict (by log order) is accept. Image
/// and candidate order are preserved and provenance becomes `hitl_verified`.
pub fn finalize(
    annotations: &[ImageAnnotation],
    verdicts: &[Verdict],
    mode: FinalizeMode,
) -> Result<FinalizeReport, ReviewError> {
    let mut latest: HashMap<(&str, usize), Decision> = HashMap::new();
    for v in verdicts {
        latest.insert((v.image_id.as_str(), v.anomaly_index), v.decision);
    }
    let mut out = Vec::with_capacity(annotations.len());
    let mut per_image = Vec::with_capacity(annotations.len());
    let mut unsure = Vec::new();
    let mut pending = Vec::new();
    for a in annotations {
        let mut counts = ImageCounts {
            image_id: a.image_id.clone(),
            before: a.anomalies.len(),
            ..ImageCounts::default()
        };
        let mut kept = Vec::new();
        for (i, rec) in a.anomalies.iter().enumerate() {
            match latest.get(&(a.image_id.as_str(), i)) {
                Some(Decision::Accept) => kept.push(rec.clone()),
                Some(Decision::Reject) => counts.rejected += 1,
                Some(Decision::Unsure) => {
                    counts.unsure += 1;
                    unsure.push((a.image_id.clone(), i));
                }
                None => {
                    counts.pending += 1;
                    pending.push((a.image_id.clone(), i));
                }
            }
        }
        counts.after = kept.len();
        let mut fin = a.clone();
        fin.anomalies = kept;
        fin.provenance = Provenance::HitlVerified;
        out.push(fin);
        per_image.push(counts);
    }
    if mode == FinalizeMode::Strict && !pending.is_empty() {
        return Err(ReviewError::Pending(pending));
    }
    Ok(FinalizeReport {
        annotations: out,
        per_image,
        unsure,
        dropped_pending: pending,
    })
}
