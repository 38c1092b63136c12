//! Matching-based evaluation of predicted anomaly sets.
//!
//! For each image, predictions are ranked by confidence and scanned in rank
//! order. Each prediction claims the still-unmatched ground truth with the
//! highest view similarity among those clearing the threshold `τ`; ties go to
//! the higher Full similarity, then to the lower ground-truth index. Claimed
//! pairs are true positives, unclaimed predictions false positives, unclaimed
//! ground truths false negatives.
//!
//! Per image and threshold this yields AP (precision summed at every new true
//! positive, weighted by the recall step) and F1 over the whole prediction
//! set. Dataset scores are macro means over images (AP first averaged over
//! thresholds, F1 averaged over images and thresholds jointly). The
//! classification-aware variants multiply every per-image, per-threshold term
//! by whether the image's real/AI label was predicted correctly.
//!
//! Empty-set conventions: an image with neither predictions nor ground truth
//! scores 1 for both AP and F1; an image with only one side empty scores 0.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    AnomalyRecord, ImageAnnotation, PredictionSet, SimilarityConfig, ThresholdSet, View,
};
use crate::similarity::{clamp_unit, mix, SimilarityBackend, SimilarityError};

/// How a prediction's ranking confidence is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// `100 - severity`: the less realistic, the more confident the claim.
    #[default]
    InvSeverity,
    /// Raw severity.
    Severity,
    /// Input order.
    Order,
}

impl ConfidenceMode {
    pub fn confidence(self, record: &AnomalyRecord) -> f64 {
        match self {
            Self::InvSeverity => 100.0 - record.severity,
            Self::Severity => record.severity,
            Self::Order => 0.0,
        }
    }
}

impl FromStr for ConfidenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "inv_severity" => Ok(Self::InvSeverity),
            "severity" => Ok(Self::Severity),
            "order" => Ok(Self::Order),
            other => Err(format!(
                "unknown confidence mode `{other}` (expected inv_severity, severity or order)"
            )),
        }
    }
}

impl fmt::Display for ConfidenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InvSeverity => "inv_severity",
            Self::Severity => "severity",
            Self::Order => "order",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPrediction {
    pub record: AnomalyRecord,
    pub confidence: f64,
    pub original_index: usize,
}

/// Confidence descending, ties by ascending original index.
pub fn rank_order(a: &RankedPrediction, b: &RankedPrediction) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.original_index.cmp(&b.original_index))
}

pub fn rank_predictions(anomalies: &[AnomalyRecord], mode: ConfidenceMode) -> Vec<RankedPrediction> {
    let mut ranked: Vec<RankedPrediction> = anomalies
        .iter()
        .enumerate()
        .map(|(i, record)| RankedPrediction {
            record: record.clone(),
            confidence: mode.confidence(record),
            original_index: i,
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked
}

/// Field similarities of every (ranked prediction, ground truth) pair.
/// Rows follow rank order; the Full view is mixed on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable {
    phe: Vec<Vec<f64>>,
    rea: Vec<Vec<f64>>,
    alpha: f64,
    gt_count: usize,
}

impl PairTable {
    /// Build from tabulated similarities, `phe[rank][gt]` and `rea[rank][gt]`.
    pub fn new(phe: Vec<Vec<f64>>, rea: Vec<Vec<f64>>, alpha: f64, gt_count: usize) -> Self {
        assert_eq!(phe.len(), rea.len(), "phe/rea row count differs");
        for (p, r) in phe.iter().zip(&rea) {
            assert!(p.len() == gt_count && r.len() == gt_count, "ragged table");
        }
        Self {
            phe,
            rea,
            alpha,
            gt_count,
        }
    }

    /// Score every pair with one batched backend call.
    pub fn compute(
        ranked: &[RankedPrediction],
        gts: &[AnomalyRecord],
        cfg: &SimilarityConfig,
        backend: &dyn SimilarityBackend,
    ) -> Result<Self> {
        let g = gts.len();
        let mut pairs = Vec::with_capacity(2 * ranked.len() * g);
        for pred in ranked {
            for gt in gts {
                pairs.push((pred.record.phenomenon.as_str(), gt.phenomenon.as_str()));
                pairs.push((pred.record.reasoning.as_str(), gt.reasoning.as_str()));
            }
        }
        let scores = if pairs.is_empty() {
            Vec::new()
        } else {
            backend.score_batch(&pairs).map_err(|source| {
                let pair = match &source {
                    SimilarityError::Transport { pair_index, .. }
                    | SimilarityError::Protocol { pair_index, .. } => *pair_index / 2,
                    SimilarityError::Cache { .. } => 0,
                };
                Error::PairScoring {
                    pred: ranked[pair / g].original_index,
                    gt: pair % g,
                    source,
                }
            })?
        };
        let mut phe = vec![vec![0.0; g]; ranked.len()];
        let mut rea = vec![vec![0.0; g]; ranked.len()];
        for (k, pair) in scores.chunks_exact(2).enumerate() {
            phe[k / g][k % g] = clamp_unit(pair[0]);
            rea[k / g][k % g] = clamp_unit(pair[1]);
        }
        Ok(Self::new(phe, rea, cfg.alpha, g))
    }

    pub fn pred_count(&self) -> usize {
        self.phe.len()
    }

    pub fn gt_count(&self) -> usize {
        self.gt_count
    }

    pub fn get(&self, view: View, rank: usize, gt: usize) -> f64 {
        match view {
            View::Phe => self.phe[rank][gt],
            View::Rea => self.rea[rank][gt],
            View::Full => mix(self.phe[rank][gt], self.rea[rank][gt], self.alpha),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// 0-based position in the ranking.
    pub rank: usize,
    /// Index of the prediction in its input list.
    pub pred_index: usize,
    pub gt_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub threshold: f64,
    pub view: View,
    pub assignments: Vec<Assignment>,
    /// 0-based ranks of the false positives.
    pub fp_ranks: Vec<usize>,
    pub fn_count: usize,
    pub pred_count: usize,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn gt_count(&self) -> usize {
        self.assignments.len() + self.fn_count
    }
}

/// Greedy one-to-one matching over a precomputed table. `pred_indices[rank]`
/// is the input index of the prediction at that rank.
pub fn match_table(table: &PairTable, pred_indices: &[usize], view: View, tau: f64) -> MatchResult {
    assert_eq!(pred_indices.len(), table.pred_count());
    let mut gt_taken = vec![false; table.gt_count()];
    let mut assignments = Vec::new();
    let mut fp_ranks = Vec::new();
    for (rank, &pred_index) in pred_indices.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None;
        for (gt, taken) in gt_taken.iter().enumerate() {
            if *taken {
                continue;
            }
            let sim = table.get(view, rank, gt);
            if sim < tau {
                continue;
            }
            let full = table.get(View::Full, rank, gt);
            let better = match best {
                None => true,
                Some((_, best_sim, best_full)) => {
                    sim > best_sim || (sim == best_sim && full > best_full)
                }
            };
            if better {
                best = Some((gt, sim, full));
            }
        }
        match best {
            Some((gt, sim, _)) => {
                gt_taken[gt] = true;
                assignments.push(Assignment {
                    rank,
                    pred_index,
                    gt_index: gt,
                    similarity: sim,
                });
            }
            None => fp_ranks.push(rank),
        }
    }
    MatchResult {
        threshold: tau,
        view,
        fn_count: gt_taken.iter().filter(|t| !**t).count(),
        assignments,
        fp_ranks,
        pred_count: pred_indices.len(),
    }
}

/// Match one image's predictions against its ground truth.
pub fn match_image(
    preds: &[RankedPrediction],
    gts: &[AnomalyRecord],
    view: View,
    tau: f64,
    cfg: &SimilarityConfig,
    backend: &dyn SimilarityBackend,
) -> Result<MatchResult> {
    let mut ranked = preds.to_vec();
    ranked.sort_by(rank_order);
    let table = PairTable::compute(&ranked, gts, cfg, backend)?;
    let indices: Vec<usize> = ranked.iter().map(|p| p.original_index).collect();
    Ok(match_table(&table, &indices, view, tau))
}

/// Average precision of a match trace against `gt_count` ground truths.
pub fn ap_of_match(result: &MatchResult, gt_count: usize) -> f64 {
    if gt_count == 0 {
        return if result.pred_count == 0 { 1.0 } else { 0.0 };
    }
    if result.assignments.is_empty() {
        return 0.0;
    }
    let mut is_tp = vec![false; result.pred_count];
    for a in &result.assignments {
        is_tp[a.rank] = true;
    }
    let step = 1.0 / gt_count as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for hit in is_tp {
        if hit {
            tp += 1;
            ap += tp as f64 / (tp + fp) as f64 * step;
        } else {
            fp += 1;
        }
    }
    ap
}

/// F1 over the full prediction set.
pub fn f1_of_match(result: &MatchResult, gt_count: usize) -> f64 {
    if gt_count == 0 && result.pred_count == 0 {
        return 1.0;
    }
    let tp = result.tp_count() as f64;
    if result.pred_count == 0 || gt_count == 0 || tp == 0.0 {
        return 0.0;
    }
    let precision = tp / result.pred_count as f64;
    let recall = tp / gt_count as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub thresholds: ThresholdSet,
    pub similarity: SimilarityConfig,
    pub confidence: ConfidenceMode,
    /// Worker threads for per-image scoring; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            thresholds: ThresholdSet::default(),
            similarity: SimilarityConfig::default(),
            confidence: ConfidenceMode::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub ap: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Every per-threshold AP/F1 of one image, for all views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub image_id: String,
    pub views: BTreeMap<View, Vec<ThresholdScore>>,
}

impl ImageScores {
    /// Mean AP over thresholds.
    pub fn sem_ap(&self, view: View) -> f64 {
        mean(self.views[&view].iter().map(|s| s.ap))
    }

    pub fn sem_f1(&self, view: View) -> f64 {
        mean(self.views[&view].iter().map(|s| s.f1))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Score one image under every view and threshold. Similarities are computed
/// once and shared across thresholds.
pub fn score_image(
    image_id: &str,
    gts: &[AnomalyRecord],
    preds: &[AnomalyRecord],
    opts: &EvalOptions,
    backend: &dyn SimilarityBackend,
) -> Result<ImageScores> {
    let ranked = rank_predictions(preds, opts.confidence);
    let table = PairTable::compute(&ranked, gts, &opts.similarity, backend)?;
    let indices: Vec<usize> = ranked.iter().map(|p| p.original_index).collect();
    let mut views = BTreeMap::new();
    for view in View::ALL {
        let scores = opts
            .thresholds
            .as_slice()
            .iter()
            .map(|&tau| {
                let m = match_table(&table, &indices, view, tau);
                ThresholdScore {
                    threshold: tau,
                    ap: ap_of_match(&m, gts.len()),
                    f1: f1_of_match(&m, gts.len()),
                    tp: m.tp_count(),
                    fp: m.fp_ranks.len(),
                    fn_: m.fn_count,
                }
            })
            .collect();
        views.insert(view, scores);
    }
    Ok(ImageScores {
        image_id: image_id.to_string(),
        views,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBreakdown {
    pub ap: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub sem_ap: f64,
    pub sem_f1: f64,
    pub per_threshold: Vec<(f64, ThresholdBreakdown)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub images: usize,
    pub views: BTreeMap<View, ViewMetrics>,
    pub per_image: Vec<ImageScores>,
}

fn threshold_key(t: f64) -> String {
    format!("{t}")
}

fn per_threshold_json(rows: &[(f64, ThresholdBreakdown)]) -> Value {
    let mut map = Map::new();
    for (t, b) in rows {
        map.insert(threshold_key(*t), json!({"ap": b.ap, "f1": b.f1}));
    }
    Value::Object(map)
}

impl MetricsReport {
    pub fn view(&self, view: View) -> &ViewMetrics {
        &self.views[&view]
    }

    /// `{"Phe": {"sem_ap", "sem_f1", "per_threshold": {"0.7": {"ap", "f1"}, ..}}, .., "images": N}`
    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        for (view, m) in &self.views {
            root.insert(
                view.to_string(),
                json!({
                    "sem_ap": m.sem_ap,
                    "sem_f1": m.sem_f1,
                    "per_threshold": per_threshold_json(&m.per_threshold),
                }),
            );
        }
        root.insert("images".into(), json!(self.images));
        Value::Object(root)
    }

    /// Per-image debugging rows: image_id, view, threshold, ap, f1, tp, fp, fn.
    pub fn write_per_image_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_image_rows(&self.per_image, writer)
    }
}

fn write_image_rows<W: Write>(rows: &[ImageScores], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(["image_id", "view", "threshold", "ap", "f1", "tp", "fp", "fn"])
        .map_err(csv_err)?;
    for image in rows {
        for (view, scores) in &image.views {
            for s in scores {
                w.write_record([
                    image.image_id.clone(),
                    view.to_string(),
                    threshold_key(s.threshold),
                    s.ap.to_string(),
                    s.f1.to_string(),
                    s.tp.to_string(),
                    s.fp.to_string(),
                    s.fn_.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Report(e.to_string()))
}

/// Pair every ground-truth image with its prediction set (or none).
fn align<'a>(
    dataset_gt: &'a [ImageAnnotation],
    preds: &'a [PredictionSet],
) -> Result<Vec<(&'a ImageAnnotation, Option<&'a PredictionSet>)>> {
    if dataset_gt.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let known: HashSet<&str> = dataset_gt.iter().map(|a| a.image_id.as_str()).collect();
    let mut by_id: HashMap<&str, &PredictionSet> = HashMap::new();
    let mut unknown = Vec::new();
    let mut duplicate = Vec::new();
    for p in preds {
        if !known.contains(p.image_id.as_str()) {
            unknown.push(p.image_id.clone());
        } else if by_id.insert(p.image_id.as_str(), p).is_some() {
            duplicate.push(p.image_id.clone());
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnknownImageIds(unknown));
    }
    if !duplicate.is_empty() {
        duplicate.sort();
        duplicate.dedup();
        return Err(Error::DuplicatePredictions(duplicate));
    }
    Ok(dataset_gt
        .iter()
        .map(|gt| (gt, by_id.get(gt.image_id.as_str()).copied()))
        .collect())
}

fn score_all(
    pairs: &[(&ImageAnnotation, Option<&PredictionSet>)],
    opts: &EvalOptions,
    backend: &dyn SimilarityBackend,
) -> Result<Vec<ImageScores>> {
    opts.similarity.validate()?;
    let run = || {
        pairs
            .par_iter()
            .map(|(gt, pred)| {
                let preds = pred.map(|p| p.anomalies.as_slice()).unwrap_or(&[]);
                score_image(&gt.image_id, &gt.anomalies, preds, opts, backend)
            })
            .collect::<Result<Vec<_>>>()
    };
    match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Report(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Reduce per-image scores, optionally gated per image by `weights`
/// (1 = counted, 0 = zeroed). Sums run in dataset order.
fn aggregate(
    scores: &[ImageScores],
    thresholds: &ThresholdSet,
    gate: impl Fn(usize) -> f64,
) -> BTreeMap<View, ViewMetrics> {
    let n = scores.len() as f64;
    let t = thresholds.len() as f64;
    let mut out = BTreeMap::new();
    for view in View::ALL {
        let mut ap_sum = 0.0;
        let mut f1_sum = 0.0;
        let mut per_t = vec![(0.0, 0.0); thresholds.len()];
        for (i, image) in scores.iter().enumerate() {
            let w = gate(i);
            let rows = &image.views[&view];
            let mut image_ap = 0.0;
            for (k, row) in rows.iter().enumerate() {
                image_ap += w * row.ap;
                f1_sum += w * row.f1;
                per_t[k].0 += w * row.ap;
                per_t[k].1 += w * row.f1;
            }
            ap_sum += image_ap / t;
        }
        out.insert(
            view,
            ViewMetrics {
                sem_ap: ap_sum / n,
                sem_f1: f1_sum / (n * t),
                per_threshold: thresholds
                    .as_slice()
                    .iter()
                    .zip(per_t)
                    .map(|(&th, (ap, f1))| {
                        (
                            th,
                            ThresholdBreakdown {
                                ap: ap / n,
                                f1: f1 / n,
                            },
                        )
                    })
                    .collect(),
            },
        );
    }
    out
}

/// SemAP / SemF1 for every view. Ground-truth images without a prediction set
/// are scored as if nothing was predicted.
pub fn evaluate(
    dataset_gt: &[ImageAnnotation],
    preds: &[PredictionSet],
    opts: &EvalOptions,
    backend: &dyn SimilarityBackend,
) -> Result<MetricsReport> {
    let pairs = align(dataset_gt, preds)?;
    let per_image = score_all(&pairs, opts, backend)?;
    Ok(MetricsReport {
        images: per_image.len(),
        views: aggregate(&per_image, &opts.thresholds, |_| 1.0),
        per_image,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsemViewMetrics {
    pub csem_ap: f64,
    pub csem_f1: f64,
    pub per_threshold: Vec<(f64, ThresholdBreakdown)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedReport {
    pub accuracy: f64,
    pub images: usize,
    pub correct: usize,
    pub views: BTreeMap<View, CsemViewMetrics>,
    /// Ungated semantic metrics over the same images.
    pub semantic: MetricsReport,
    pub correctly_classified: Vec<bool>,
}

impl ClassifiedReport {
    pub fn view(&self, view: View) -> &CsemViewMetrics {
        &self.views[&view]
    }

    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        root.insert("accuracy".into(), json!(self.accuracy));
        root.insert("images".into(), json!(self.images));
        root.insert("correct".into(), json!(self.correct));
        for (view, m) in &self.views {
            root.insert(
                view.to_string(),
                json!({
                    "csem_ap": m.csem_ap,
                    "csem_f1": m.csem_f1,
                    "per_threshold": per_threshold_json(&m.per_threshold),
                }),
            );
        }
        Value::Object(root)
    }
}

/// Detection accuracy plus CSemAP / CSemF1: an image's explanation terms
/// count only when its real/AI label was predicted correctly.
pub fn evaluate_classified(
    dataset_gt: &[ImageAnnotation],
    preds: &[PredictionSet],
    opts: &EvalOptions,
    backend: &dyn SimilarityBackend,
) -> Result<ClassifiedReport> {
    let pairs = align(dataset_gt, preds)?;
    let mut missing = Vec::new();
    let mut correct_flags = Vec::with_capacity(pairs.len());
    for (gt, pred) in &pairs {
        match (gt.source_label, pred.and_then(|p| p.predicted_label)) {
            (Some(y), Some(y_hat)) => correct_flags.push(y == y_hat),
            _ => missing.push(gt.image_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingLabels(missing));
    }
    let per_image = score_all(&pairs, opts, backend)?;
    let semantic = MetricsReport {
        images: per_image.len(),
        views: aggregate(&per_image, &opts.thresholds, |_| 1.0),
        per_image,
    };
    let gated = aggregate(&semantic.per_image, &opts.thresholds, |i| {
        if correct_flags[i] {
            1.0
        } else {
            0.0
        }
    });
    let correct = correct_flags.iter().filter(|c| **c).count();
    Ok(ClassifiedReport {
        accuracy: correct as f64 / pairs.len() as f64,
        images: pairs.len(),
        correct,
        views: gated
            .into_iter()
            .map(|(view, m)| {
                (
                    view,
                    CsemViewMetrics {
                        csem_ap: m.sem_ap,
                        csem_f1: m.sem_f1,
                        per_threshold: m.per_threshold,
                    },
                )
            })
            .collect(),
        semantic,
        correctly_classified: correct_flags,
    })
}
