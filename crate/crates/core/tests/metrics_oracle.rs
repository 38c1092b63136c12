mod common;

use std::collections::BTreeSet;

use anomkit_core::metrics::{
    ap_of_match, evaluate, evaluate_classified, f1_of_match, match_image, ConfidenceMode, EvalOptions,
    MatchResult, RankedPrediction,
};
use anomkit_core::similarity::SurrogateBackend;
use anomkit_core::{AnomalyRecord, ImageAnnotation, PredictionSet, Provenance, SimilarityConfig, SourceLabel, View};
use common::TableBackend;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    table: TableBackend,
    confidences: Vec<f64>,
    alpha: f64,
}

fn quantized(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..=10) as f64 / 10.0
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let k = rng.random_range(0..=5);
    let g = rng.random_range(0..=5);
    let mut grid = || (0..k).map(|_| (0..g).map(|_| quantized(rng)).collect()).collect::<Vec<Vec<f64>>>();
    let phe = grid();
    let rea = grid();
    Instance {
        table: TableBackend { phe, rea },
        confidences: (0..k).map(|_| rng.random_range(0..4) as f64).collect(),
        alpha: [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)],
    }
}

fn ranked(inst: &Instance, preds: &[AnomalyRecord]) -> Vec<RankedPrediction> {
    preds
        .iter()
        .enumerate()
        .map(|(i, r)| RankedPrediction {
            record: r.clone(),
            confidence: inst.confidences[i],
            original_index: i,
        })
        .collect()
}

/// Step-by-step reading of the scan rule, written without reference to the
/// engine: returns (pred, gt) pairs in scan order and the FP scan positions.
fn oracle_scan(inst: &Instance, view: View, tau: f64) -> (Vec<(usize, usize)>, Vec<usize>, usize) {
    let k = inst.confidences.len();
    let g = inst.table.phe.first().map_or(0, |r| r.len());
    let mut order: Vec<usize> = (0..k).collect();
    // highest confidence first; equal confidence keeps the lower index first
    order.sort_by(|&a, &b| {
        inst.confidences[b]
            .partial_cmp(&inst.confidences[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let sim = |i: usize, j: usize, v: View| -> f64 {
        let p = inst.table.phe[i][j];
        let r = inst.table.rea[i][j];
        match v {
            View::Phe => p,
            View::Rea => r,
            View::Full => inst.alpha * p + (1.0 - inst.alpha) * r,
        }
    };
    let mut unmatched: BTreeSet<usize> = (0..g).collect();
    let mut pairs = Vec::new();
    let mut fps = Vec::new();
    for (position, &i) in order.iter().enumerate() {
        let mut candidates: Vec<usize> = unmatched.iter().copied().filter(|&j| sim(i, j, view) >= tau).collect();
        if candidates.is_empty() {
            fps.push(position);
            continue;
        }
        // best first: highest view similarity, then highest Full, then smallest index
        candidates.sort_by(|&a, &b| {
            sim(i, b, view)
                .partial_cmp(&sim(i, a, view))
                .unwrap()
                .then(sim(i, b, View::Full).partial_cmp(&sim(i, a, View::Full)).unwrap())
                .then(a.cmp(&b))
        });
        let j = candidates[0];
        unmatched.remove(&j);
        pairs.push((i, j));
    }
    (pairs, fps, unmatched.len())
}

/// AP from the scan trace via cumulative precision times recall increments.
fn oracle_ap(tp_flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return if tp_flags.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut tp = 0.0;
    for (k, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1.0;
        }
        let precision = tp / (k as f64 + 1.0);
        let recall = tp / gt_count as f64;
        if hit {
            ap += precision * (recall - prev_recall);
        }
        prev_recall = recall;
    }
    ap
}

fn run(inst: &Instance, view: View, tau: f64) -> MatchResult {
    let (preds, gts) = inst.table.records();
    let cfg = SimilarityConfig::new(inst.alpha, "table").unwrap();
    match_image(&ranked(inst, &preds), &gts, view, tau, &cfg, &inst.table).unwrap()
}

#[test]
fn scan_rule_agrees_with_independent_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let started = std::time::Instant::now();
    let mut disagreements = 0;
    for _ in 0..1000 {
        let inst = instance(&mut rng);
        let view = View::ALL[rng.random_range(0..3)];
        let tau = [0.5, 0.7, 0.8, 0.9, 1.0][rng.random_range(0..5)];
        let got = run(&inst, view, tau);
        let (pairs, fps, fns) = oracle_scan(&inst, view, tau);
        let got_pairs: Vec<(usize, usize)> = got.assignments.iter().map(|a| (a.pred_index, a.gt_index)).collect();
        if got_pairs != pairs || got.fp_ranks != fps || got.fn_count != fns {
            disagreements += 1;
        }
        let mut flags = vec![false; got.pred_count];
        for a in &got.assignments {
            flags[a.rank] = true;
        }
        let g = got.gt_count();
        assert!((ap_of_match(&got, g) - oracle_ap(&flags, g)).abs() < 1e-12);
    }
    assert_eq!(disagreements, 0);
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn ap_and_f1_never_increase_with_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let taus: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    let mut violations = 0;
    for _ in 0..200 {
        let inst = instance(&mut rng);
        for view in View::ALL {
            let mut prev = (f64::INFINITY, f64::INFINITY);
            for &tau in &taus {
                let m = run(&inst, view, tau);
                let cur = (ap_of_match(&m, m.gt_count()), f1_of_match(&m, m.gt_count()));
                if cur.0 > prev.0 + 1e-12 || cur.1 > prev.1 + 1e-12 {
                    violations += 1;
                }
                prev = cur;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn matching_is_one_to_one_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let inst = instance(&mut rng);
        let g = inst.table.phe.first().map_or(0, Vec::len);
        for view in View::ALL {
            let m = run(&inst, view, 0.6);
            let preds: BTreeSet<usize> = m.assignments.iter().map(|a| a.pred_index).collect();
            let gts: BTreeSet<usize> = m.assignments.iter().map(|a| a.gt_index).collect();
            assert_eq!(preds.len(), m.assignments.len());
            assert_eq!(gts.len(), m.assignments.len());
            assert_eq!(m.assignments.len() + m.fn_count, g);
            assert_eq!(m.assignments.len() + m.fp_ranks.len(), m.pred_count);
            for a in &m.assignments {
                assert!(a.similarity >= 0.6);
            }
            let ap = ap_of_match(&m, g);
            let f1 = f1_of_match(&m, g);
            assert!((0.0..=1.0).contains(&ap) && (0.0..=1.0).contains(&f1));
        }
    }
}

#[test]
fn input_order_does_not_matter_once_ranked() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let inst = instance(&mut rng);
        let (preds, gts) = inst.table.records();
        let cfg = SimilarityConfig::new(inst.alpha, "table").unwrap();
        let mut shuffled = ranked(&inst, &preds);
        let base = match_image(&shuffled, &gts, View::Full, 0.7, &cfg, &inst.table).unwrap();
        shuffled.shuffle(&mut rng);
        let again = match_image(&shuffled, &gts, View::Full, 0.7, &cfg, &inst.table).unwrap();
        assert_eq!(base, again);
    }
}

fn synthetic_dataset(n: usize, rng: &mut ChaCha8Rng) -> Vec<ImageAnnotation> {
    let words = ["hand", "six", "fingers", "chair", "floats", "shadow", "wrong", "clock", "melts", "reflection"];
    (0..n)
        .map(|i| {
            let count = rng.random_range(1..5);
            let anomalies = (0..count)
                .map(|_| {
                    let mut text = |len: usize| (0..len).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ");
                    let (n, p, r) = (text(2), text(5), text(7));
                    AnomalyRecord::new(n, p, r, rng.random_range(0..=100) as f64).unwrap()
                })
                .collect();
            let mut a = ImageAnnotation::new(format!("img{i:02}"), format!("img{i:02}.png"), Provenance::HitlVerified, anomalies);
            a.source_label = Some(if i % 2 == 0 { SourceLabel::Ai } else { SourceLabel::Real });
            a
        })
        .collect()
}

fn echo_predictions(gt: &[ImageAnnotation], flip: bool) -> Vec<PredictionSet> {
    gt.iter()
        .map(|a| {
            let label = a.source_label.unwrap();
            let label = match (flip, label) {
                (false, l) => l,
                (true, SourceLabel::Ai) => SourceLabel::Real,
                (true, SourceLabel::Real) => SourceLabel::Ai,
            };
            PredictionSet::new(a.image_id.clone(), a.anomalies.clone()).with_label(label)
        })
        .collect()
}

#[test]
fn identity_empty_and_both_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let gt = synthetic_dataset(20, &mut rng);
    let opts = EvalOptions::default();

    let same = evaluate_classified(&gt, &echo_predictions(&gt, false), &opts, &SurrogateBackend).unwrap();
    assert_eq!(same.accuracy, 1.0);
    for view in View::ALL {
        assert_eq!(same.semantic.view(view).sem_ap, 1.0);
        assert_eq!(same.semantic.view(view).sem_f1, 1.0);
        assert_eq!(same.view(view).csem_ap, 1.0);
        assert_eq!(same.view(view).csem_f1, 1.0);
    }

    let empty: Vec<PredictionSet> = gt.iter().map(|a| PredictionSet::new(a.image_id.clone(), vec![])).collect();
    let none = evaluate(&gt, &empty, &opts, &SurrogateBackend).unwrap();
    for view in View::ALL {
        assert_eq!(none.view(view).sem_ap, 0.0);
        assert_eq!(none.view(view).sem_f1, 0.0);
    }

    let blank: Vec<ImageAnnotation> = (0..3).map(|i| ImageAnnotation::new(format!("b{i}"), "b.png", Provenance::Human, vec![])).collect();
    let both = evaluate(&blank, &[], &opts, &SurrogateBackend).unwrap();
    for view in View::ALL {
        assert_eq!(both.view(view).sem_ap, 1.0);
        assert_eq!(both.view(view).sem_f1, 1.0);
    }
}

#[test]
fn flipping_every_label_zeroes_csem_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = synthetic_dataset(12, &mut rng);
    // imperfect text so SemAP is strictly between 0 and 1
    let mut preds = echo_predictions(&gt, false);
    for p in preds.iter_mut().step_by(3) {
        p.anomalies.pop();
    }
    let opts = EvalOptions {
        confidence: ConfidenceMode::Severity,
        ..Default::default()
    };
    let straight = evaluate_classified(&gt, &preds, &opts, &SurrogateBackend).unwrap();
    for p in preds.iter_mut() {
        p.predicted_label = Some(match p.predicted_label.unwrap() {
            SourceLabel::Ai => SourceLabel::Real,
            SourceLabel::Real => SourceLabel::Ai,
        });
    }
    let flipped = evaluate_classified(&gt, &preds, &opts, &SurrogateBackend).unwrap();
    assert_eq!(flipped.accuracy, 0.0);
    for view in View::ALL {
        assert_eq!(flipped.view(view).csem_ap, 0.0);
        assert_eq!(flipped.view(view).csem_f1, 0.0);
        assert_eq!(flipped.semantic.view(view), straight.semantic.view(view));
    }
}

#[test]
fn csem_equals_correct_subset_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gt = synthetic_dataset(10, &mut rng);
    let mut preds = echo_predictions(&gt, false);
    for p in preds.iter_mut().take(4) {
        p.anomalies.truncate(1);
        p.predicted_label = Some(SourceLabel::Real);
    }
    let opts = EvalOptions::default();
    let report = evaluate_classified(&gt, &preds, &opts, &SurrogateBackend).unwrap();
    let correct: Vec<usize> = (0..gt.len()).filter(|&i| report.correctly_classified[i]).collect();
    let subset_gt: Vec<ImageAnnotation> = correct.iter().map(|&i| gt[i].clone()).collect();
    let subset_pred: Vec<PredictionSet> = correct.iter().map(|&i| preds[i].clone()).collect();
    let subset = evaluate(&subset_gt, &subset_pred, &opts, &SurrogateBackend).unwrap();
    let frac = correct.len() as f64 / gt.len() as f64;
    for view in View::ALL {
        assert!((report.view(view).csem_ap - subset.view(view).sem_ap * frac).abs() < 1e-12);
        assert!((report.view(view).csem_f1 - subset.view(view).sem_f1 * frac).abs() < 1e-12);
    }
}

#[test]
fn alpha_one_makes_full_equal_phe() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt = synthetic_dataset(8, &mut rng);
    let mut preds = echo_predictions(&gt, false);
    for p in preds.iter_mut() {
        for a in p.anomalies.iter_mut() {
            a.reasoning = "unrelated words entirely".into();
        }
    }
    let opts = EvalOptions {
        similarity: SimilarityConfig::new(1.0, "surrogate-token-f1").unwrap(),
        ..Default::default()
    };
    let r = evaluate(&gt, &preds, &opts, &SurrogateBackend).unwrap();
    assert_eq!(r.view(View::Full), r.view(View::Phe));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt = synthetic_dataset(30, &mut rng);
    let mut preds = echo_predictions(&gt, false);
    for p in preds.iter_mut().step_by(2) {
        p.anomalies.reverse();
        p.anomalies.pop();
    }
    let serial = EvalOptions { jobs: Some(1), ..Default::default() };
    let parallel = EvalOptions { jobs: Some(4), ..Default::default() };
    let a = evaluate(&gt, &preds, &serial, &SurrogateBackend).unwrap();
    let b = evaluate(&gt, &preds, &parallel, &SurrogateBackend).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}
