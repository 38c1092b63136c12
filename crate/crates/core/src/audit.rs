//! Generator audit metrics and dataset statistics.
//!
//! Per image: `mai = Σ (100 - s) / 100` (a sum, despite the "mean" in its
//! name), `af` = anomaly count and `cap = mai * af`. Generator rows average
//! the per-image values, so the mean CAP is generally not the product of the
//! mean MAI and mean AF.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{AnomalyRecord, ImageAnnotation};

/// Tag used for images that carry no `generator_tag`.
pub const UNTAGGED: &str = "untagged";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAudit {
    pub image_id: String,
    pub mai: f64,
    pub af: usize,
    pub cap: f64,
}

pub fn audit_image(image_id: &str, anomalies: &[AnomalyRecord]) -> ImageAudit {
    let mai: f64 = anomalies.iter().map(|a| (100.0 - a.severity) / 100.0).sum();
    let af = anomalies.len();
    ImageAudit {
        image_id: image_id.to_string(),
        mai,
        af,
        cap: mai * af as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorAudit {
    pub generator_tag: String,
    pub mean_mai: f64,
    pub mean_af: f64,
    pub mean_cap: f64,
    pub image_count: usize,
}

/// Per-tag means, sorted by mean CAP, then mean MAI, then tag. Tags with no
/// images never appear.
pub fn audit_generator(images: &[(String, ImageAudit)]) -> Vec<GeneratorAudit> {
    let mut groups: BTreeMap<&str, Vec<&ImageAudit>> = BTreeMap::new();
    for (tag, audit) in images {
        groups.entry(tag.as_str()).or_default().push(audit);
    }
    let mut rows: Vec<GeneratorAudit> = groups
        .into_iter()
        .map(|(tag, audits)| {
            let n = audits.len() as f64;
            GeneratorAudit {
                generator_tag: tag.to_string(),
                mean_mai: audits.iter().map(|a| a.mai).sum::<f64>() / n,
                mean_af: audits.iter().map(|a| a.af as f64).sum::<f64>() / n,
                mean_cap: audits.iter().map(|a| a.cap).sum::<f64>() / n,
                image_count: audits.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.mean_cap
            .total_cmp(&b.mean_cap)
            .then(a.mean_mai.total_cmp(&b.mean_mai))
            .then_with(|| a.generator_tag.cmp(&b.generator_tag))
    });
    rows
}

fn tag_of(a: &ImageAnnotation) -> String {
    a.generator_tag.clone().unwrap_or_else(|| UNTAGGED.to_string())
}

/// Audit every annotated image and build the leaderboard.
pub fn audit_annotations(annotations: &[ImageAnnotation]) -> (Vec<(String, ImageAudit)>, Vec<GeneratorAudit>) {
    let images: Vec<(String, ImageAudit)> = annotations
        .par_iter()
        .map(|a| (tag_of(a), audit_image(&a.image_id, &a.anomalies)))
        .collect();
    let board = audit_generator(&images);
    (images, board)
}

/// Aligned plain-text leaderboard.
pub fn leaderboard_table(rows: &[GeneratorAudit]) -> String {
    let header = ["tag", "MAI↓", "AF↓", "CAP↓", "n"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.generator_tag.clone(),
                format!("{:.2}", r.mean_mai),
                format!("{:.2}", r.mean_af),
                format!("{:.2}", r.mean_cap),
                r.image_count.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        for (i, cell) in cells.iter().enumerate() {
            let pad = widths[i] - cell.chars().count();
            if i == 0 {
                let _ = write!(out, "{cell}{}", " ".repeat(pad));
            } else {
                let _ = write!(out, "  {}{cell}", " ".repeat(pad));
            }
        }
        out.push('\n');
    };
    line(&header);
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells);
    }
    out
}

pub const HISTOGRAM_BINS: usize = 10;

/// Bin index for a severity: `[0,10), [10,20), …, [90,100]`.
pub fn severity_bin(severity: f64) -> usize {
    ((severity / 10.0).floor() as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupStats {
    pub image_count: usize,
    pub anomaly_count: usize,
    pub mean_anomalies_per_image: f64,
    pub mean_severity: f64,
    pub severity_histogram: [usize; HISTOGRAM_BINS],
}

impl GroupStats {
    fn from_images<'a>(images: impl Iterator<Item = &'a ImageAnnotation>) -> Self {
        let mut s = Self::default();
        let mut severity_sum = 0.0;
        for image in images {
            s.image_count += 1;
            for a in &image.anomalies {
                s.anomaly_count += 1;
                severity_sum += a.severity;
                s.severity_histogram[severity_bin(a.severity)] += 1;
            }
        }
        if s.image_count > 0 {
            s.mean_anomalies_per_image = s.anomaly_count as f64 / s.image_count as f64;
        }
        if s.anomaly_count > 0 {
            s.mean_severity = severity_sum / s.anomaly_count as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub overall: GroupStats,
    pub per_tag: BTreeMap<String, GroupStats>,
}

pub fn dataset_stats(annotations: &[ImageAnnotation]) -> DatasetStats {
    let mut tags: BTreeMap<String, Vec<&ImageAnnotation>> = BTreeMap::new();
    for a in annotations {
        tags.entry(tag_of(a)).or_default().push(a);
    }
    DatasetStats {
        overall: GroupStats::from_images(annotations.iter()),
        per_tag: tags
            .into_iter()
            .map(|(tag, images)| (tag, GroupStats::from_images(images.into_iter())))
            .collect(),
    }
}

/// Plain-text rendering of one or more labelled stats columns, e.g. before
/// and after review.
pub fn stats_table(columns: &[(&str, &DatasetStats)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<24}", "");
    for (label, _) in columns {
        let _ = write!(out, "{label:>14}");
    }
    out.push('\n');
    let mut row = |name: String, f: &dyn Fn(&DatasetStats) -> String| {
        let _ = write!(out, "{name:<24}");
        for (_, s) in columns {
            let _ = write!(out, "{:>14}", f(s));
        }
        out.push('\n');
    };
    row("images".into(), &|s| s.overall.image_count.to_string());
    row("anomalies".into(), &|s| s.overall.anomaly_count.to_string());
    row("anomalies per image".into(), &|s| format!("{:.2}", s.overall.mean_anomalies_per_image));
    row("mean severity".into(), &|s| format!("{:.2}", s.overall.mean_severity));
    for bin in 0..HISTOGRAM_BINS {
        let label = if bin == HISTOGRAM_BINS - 1 {
            format!("severity [{}, 100]", bin * 10)
        } else {
            format!("severity [{}, {})", bin * 10, bin * 10 + 10)
        };
        row(label, &|s| s.overall.severity_histogram[bin].to_string());
    }
    let mut tags: Vec<&String> = columns.iter().flat_map(|(_, s)| s.per_tag.keys()).collect();
    tags.sort();
    tags.dedup();
    for tag in tags {
        row(format!("{tag}: images"), &|s| {
            s.per_tag.get(tag).map_or(0, |g| g.image_count).to_string()
        });
        row(format!("{tag}: per image"), &|s| {
            format!("{:.2}", s.per_tag.get(tag).map_or(0.0, |g| g.mean_anomalies_per_image))
        });
    }
    out
}
