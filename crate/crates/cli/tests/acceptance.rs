//! Acceptance run: one PASS/FAIL line per criterion, then a summary.
//!
//! Everything here runs offline. Similarity comes from the surrogate backend
//! or from fixed tables, the chat model is the in-process mock, and the two
//! binary checks point every network setting at a closed port.
//!
//! `cargo test -p anomkit-cli --test acceptance`

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anomkit_agent::{AgentConfig, ImageInput, MockBackend, Pipeline};
use anomkit_core::audit::{audit_annotations, audit_image};
use anomkit_core::metrics::{
    ap_of_match, evaluate, evaluate_classified, f1_of_match, match_image, rank_predictions, ConfidenceMode,
    EvalOptions, MatchResult, RankedPrediction,
};
use anomkit_core::parser::{format_structured_list, parse_structured_list};
use anomkit_core::similarity::{SimilarityBackend, SimilarityError, SurrogateBackend};
use anomkit_core::{
    jsonl, AnomalyRecord, Decision, ImageAnnotation, PredictionSet, Provenance, SimilarityConfig, SourceLabel,
    ThresholdSet, Verdict, View,
};
use anomkit_review::{finalize, FinalizeMode};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_secs,
        format!("took {:.3}s, limit {limit_secs}s", elapsed.as_secs_f64()),
    )
}

fn rec(phe: &str, rea: &str, severity: f64) -> AnomalyRecord {
    AnomalyRecord::new("n", phe, rea, severity).unwrap()
}

fn image(id: &str, anomalies: Vec<AnomalyRecord>, label: Option<SourceLabel>) -> ImageAnnotation {
    let mut a = ImageAnnotation::new(id, format!("{id}.png"), Provenance::HitlVerified, anomalies);
    a.source_label = label;
    a
}

const TAUS: [f64; 3] = [0.7, 0.8, 0.9];

fn ap_fixture() -> Check {
    let started = Instant::now();
    let g1 = rec("chair floats above floor", "gravity needs support", 10.0);
    let g2 = rec("man has three arms", "humans have two arms", 20.0);
    let p2 = rec("sky colour odd", "sunset hue wrong", 15.0);
    let preds = vec![g1.clone(), p2, g2.clone()];
    let gts = vec![g1, g2];
    let ranked = rank_predictions(&preds, ConfidenceMode::InvSeverity);
    let cfg = SimilarityConfig::default();
    for tau in TAUS {
        for view in View::ALL {
            let m = match_image(&ranked, &gts, view, tau, &cfg, &SurrogateBackend).map_err(|e| e.to_string())?;
            let (ap, f1) = (ap_of_match(&m, 2), f1_of_match(&m, 2));
            ensure((ap - 5.0 / 6.0).abs() <= 1e-9, format!("AP {ap} at tau {tau} {view}"))?;
            ensure((f1 - 0.8).abs() <= 1e-9, format!("F1 {f1} at tau {tau} {view}"))?;
        }
    }
    within(started.elapsed(), 1.0)?;
    Ok(format!("AP=5/6, F1=0.8 at tau 0.7/0.8/0.9, all views, {:.3}s", started.elapsed().as_secs_f64()))
}

const VOCAB: [&str; 24] = [
    "hand", "finger", "shadow", "chair", "floats", "missing", "extra", "warped", "clock", "face", "window",
    "reflection", "gravity", "anatomy", "light", "texture", "merged", "blurred", "street", "sign", "text",
    "garbled", "wheel", "symmetry",
];

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn identity_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let gt: Vec<ImageAnnotation> = (0..20)
        .map(|i| {
            let n = rng.random_range(1..=4);
            let anomalies = (0..n)
                .map(|_| rec(&sentence(&mut rng, 6), &sentence(&mut rng, 8), rng.random_range(0..=100) as f64))
                .collect();
            let label = if rng.random_bool(0.5) { SourceLabel::Ai } else { SourceLabel::Real };
            image(&format!("img{i:02}"), anomalies, Some(label))
        })
        .collect();
    let same: Vec<PredictionSet> = gt
        .iter()
        .map(|g| PredictionSet::new(&g.image_id, g.anomalies.clone()).with_label(g.source_label.unwrap()))
        .collect();
    let opts = EvalOptions::default();
    let r = evaluate_classified(&gt, &same, &opts, &SurrogateBackend).map_err(|e| e.to_string())?;
    for v in View::ALL {
        let (s, c) = (r.semantic.view(v), r.view(v));
        ensure(
            s.sem_ap == 1.0 && s.sem_f1 == 1.0 && c.csem_ap == 1.0 && c.csem_f1 == 1.0,
            format!("identity {v}: {} {} {} {}", s.sem_ap, s.sem_f1, c.csem_ap, c.csem_f1),
        )?;
    }
    let empty: Vec<PredictionSet> = gt
        .iter()
        .map(|g| PredictionSet::new(&g.image_id, vec![]).with_label(g.source_label.unwrap()))
        .collect();
    let r = evaluate_classified(&gt, &empty, &opts, &SurrogateBackend).map_err(|e| e.to_string())?;
    for v in View::ALL {
        let (s, c) = (r.semantic.view(v), r.view(v));
        ensure(
            s.sem_ap == 0.0 && s.sem_f1 == 0.0 && c.csem_ap == 0.0 && c.csem_f1 == 0.0,
            format!("empty predictions {v}: {} {}", s.sem_ap, s.sem_f1),
        )?;
    }
    let both_empty: Vec<ImageAnnotation> = (0..20).map(|i| image(&format!("e{i}"), vec![], None)).collect();
    let none: Vec<PredictionSet> = both_empty.iter().map(|g| PredictionSet::new(&g.image_id, vec![])).collect();
    let r = evaluate(&both_empty, &none, &opts, &SurrogateBackend).map_err(|e| e.to_string())?;
    for v in View::ALL {
        ensure(
            r.view(v).sem_ap == 1.0 && r.view(v).sem_f1 == 1.0,
            format!("both-empty {v}: {} {}", r.view(v).sem_ap, r.view(v).sem_f1),
        )?;
    }
    Ok("20 images: identity 1.0 (Sem and CSem), empty predictions 0.0, both-empty 1.0".into())
}

/// Similarities read from tables. Prediction texts are `p<i>`, ground truth
/// `g<j>`, reasoning texts carry an `r` suffix.
struct Table {
    phe: Vec<Vec<f64>>,
    rea: Vec<Vec<f64>>,
}

impl Table {
    fn records(&self) -> (Vec<AnomalyRecord>, Vec<AnomalyRecord>) {
        let k = self.phe.len();
        let g = self.phe.first().map_or(0, Vec::len);
        let r = |tag: &str, i: usize| AnomalyRecord::new("n", format!("{tag}{i}"), format!("{tag}{i}r"), 50.0).unwrap();
        ((0..k).map(|i| r("p", i)).collect(), (0..g).map(|j| r("g", j)).collect())
    }
}

impl SimilarityBackend for Table {
    fn backend_id(&self) -> &str {
        "table"
    }

    fn score(&self, h: &str, r: &str) -> Result<f64, SimilarityError> {
        let idx = |s: &str| s[1..].trim_end_matches('r').parse::<usize>().unwrap();
        let (i, j) = (idx(h), idx(r));
        Ok(if h.ends_with('r') { self.rea[i][j] } else { self.phe[i][j] })
    }
}

struct Instance {
    table: Table,
    confidences: Vec<f64>,
    alpha: f64,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let k = rng.random_range(0..=5);
    let g = rng.random_range(0..=5);
    let mut grid = || {
        (0..k)
            .map(|_| (0..g).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect())
            .collect::<Vec<Vec<f64>>>()
    };
    let (phe, rea) = (grid(), grid());
    Instance {
        table: Table { phe, rea },
        confidences: (0..k).map(|_| rng.random_range(0..4) as f64).collect(),
        alpha: [0.0, 0.25, 0.5, 0.75, 1.0][rng.random_range(0..5)],
    }
}

fn run(inst: &Instance, view: View, tau: f64) -> Result<MatchResult, String> {
    let (preds, gts) = inst.table.records();
    let ranked: Vec<RankedPrediction> = preds
        .into_iter()
        .enumerate()
        .map(|(i, record)| RankedPrediction {
            record,
            confidence: inst.confidences[i],
            original_index: i,
        })
        .collect();
    let cfg = SimilarityConfig::new(inst.alpha, "table").unwrap();
    match_image(&ranked, &gts, view, tau, &cfg, &inst.table).map_err(|e| e.to_string())
}

fn monotonicity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let grid = [0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut violations = 0;
    for _ in 0..200 {
        let inst = instance(&mut rng);
        let g = inst.table.phe.first().map_or(0, Vec::len);
        for view in View::ALL {
            let mut prev: Option<(f64, f64)> = None;
            for tau in grid {
                let m = run(&inst, view, tau)?;
                let cur = (ap_of_match(&m, g), f1_of_match(&m, g));
                if let Some(p) = prev {
                    if cur.0 > p.0 + 1e-12 || cur.1 > p.1 + 1e-12 {
                        violations += 1;
                    }
                }
                prev = Some(cur);
            }
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok("200 instances x 3 views x 8 thresholds: 0 violations".into())
}

/// The scan rule step by step: predictions by confidence (ties by index);
/// each takes the unmatched ground truth with the highest view similarity
/// at or above tau, then the highest Full similarity, then the lowest index.
fn oracle_scan(inst: &Instance, view: View, tau: f64) -> (Vec<(usize, usize)>, Vec<usize>, usize) {
    let k = inst.confidences.len();
    let g = inst.table.phe.first().map_or(0, Vec::len);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| inst.confidences[b].partial_cmp(&inst.confidences[a]).unwrap().then(a.cmp(&b)));
    let sim = |i: usize, j: usize, v: View| {
        let (p, r) = (inst.table.phe[i][j], inst.table.rea[i][j]);
        match v {
            View::Phe => p,
            View::Rea => r,
            View::Full => inst.alpha * p + (1.0 - inst.alpha) * r,
        }
    };
    let mut free: BTreeSet<usize> = (0..g).collect();
    let (mut pairs, mut fps) = (Vec::new(), Vec::new());
    for (pos, &i) in order.iter().enumerate() {
        let mut best: Option<usize> = None;
        for &j in &free {
            if sim(i, j, view) < tau {
                continue;
            }
            best = match best {
                None => Some(j),
                Some(b) => {
                    let better = sim(i, j, view) > sim(i, b, view)
                        || (sim(i, j, view) == sim(i, b, view) && sim(i, j, View::Full) > sim(i, b, View::Full));
                    Some(if better { j } else { b })
                }
            };
        }
        match best {
            Some(j) => {
                free.remove(&j);
                pairs.push((i, j));
            }
            None => fps.push(pos),
        }
    }
    (pairs, fps, free.len())
}

fn greedy_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let inst = instance(&mut rng);
        let view = View::ALL[rng.random_range(0..3)];
        let tau = [0.5, 0.7, 0.8, 0.9, 1.0][rng.random_range(0..5)];
        let got = run(&inst, view, tau)?;
        let pairs: Vec<(usize, usize)> = got.assignments.iter().map(|a| (a.pred_index, a.gt_index)).collect();
        if (pairs, got.fp_ranks.clone(), got.fn_count) != oracle_scan(&inst, view, tau) {
            disagreements += 1;
        }
    }
    ensure(disagreements == 0, format!("{disagreements} disagreements"))?;
    within(started.elapsed(), 10.0)?;
    Ok(format!("1000 instances, 0 disagreements, {:.3}s", started.elapsed().as_secs_f64()))
}

fn csem_gating() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt: Vec<ImageAnnotation> = (0..8)
        .map(|i| {
            let anomalies = (0..3).map(|_| rec(&sentence(&mut rng, 5), &sentence(&mut rng, 7), 30.0)).collect();
            image(&format!("c{i}"), anomalies, Some(if i % 2 == 0 { SourceLabel::Ai } else { SourceLabel::Real }))
        })
        .collect();
    // predictions: partially overlapping texts, correct labels
    let preds: Vec<PredictionSet> = gt
        .iter()
        .map(|g| {
            let mut a = g.anomalies.clone();
            a[1] = rec(&sentence(&mut rng, 5), &sentence(&mut rng, 7), 40.0);
            PredictionSet::new(&g.image_id, a).with_label(g.source_label.unwrap())
        })
        .collect();
    let flipped: Vec<PredictionSet> = preds
        .iter()
        .map(|p| {
            let label = match p.predicted_label.unwrap() {
                SourceLabel::Ai => SourceLabel::Real,
                SourceLabel::Real => SourceLabel::Ai,
            };
            p.clone().with_label(label)
        })
        .collect();
    let opts = EvalOptions::default();
    let before = evaluate_classified(&gt, &preds, &opts, &SurrogateBackend).map_err(|e| e.to_string())?;
    let after = evaluate_classified(&gt, &flipped, &opts, &SurrogateBackend).map_err(|e| e.to_string())?;
    for v in View::ALL {
        ensure(before.view(v).csem_ap > 0.0, format!("fixture has no CSem mass in {v}"))?;
        ensure(
            after.view(v).csem_ap == 0.0 && after.view(v).csem_f1 == 0.0,
            format!("flipped CSem {v}: {} {}", after.view(v).csem_ap, after.view(v).csem_f1),
        )?;
        ensure(
            after.semantic.view(v) == before.semantic.view(v),
            format!("SemAP/SemF1 changed in {v}"),
        )?;
    }
    ensure(after.accuracy == 0.0, "accuracy not 0 after flip")?;
    Ok(format!(
        "flip: CSem 0 in all views, SemAP (Full {:.4}) unchanged",
        before.semantic.view(View::Full).sem_ap
    ))
}

fn audit_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(0..=12);
        let recs: Vec<_> = (0..n).map(|_| rec("p", "r", rng.random_range(0..=1000) as f64 / 10.0)).collect();
        let a = audit_image(&format!("i{i}"), &recs);
        worst = worst.max((a.cap - a.mai * a.af as f64).abs());
    }
    ensure(worst <= 1e-9, format!("max |CAP - MAI*AF| = {worst}"))?;
    let a = audit_image("x", &[rec("p", "r", 20.0), rec("p", "r", 25.0)]);
    ensure(
        (a.mai - 1.55).abs() < 1e-12 && a.af == 2 && (a.cap - 3.10).abs() < 1e-12,
        format!("{{20,25}} -> ({}, {}, {})", a.mai, a.af, a.cap),
    )?;
    // (mai 1, af 1) and (mai 2, af 4): mean CAP 4.5, product of means 3.75
    let mk = |id: &str, sev: &[f64]| {
        let mut i = image(id, sev.iter().map(|s| rec("p", "r", *s)).collect(), None);
        i.generator_tag = Some("g".into());
        i
    };
    let (_, board) = audit_annotations(&[mk("a", &[0.0]), mk("b", &[50.0, 50.0, 50.0, 50.0])]);
    let g = &board[0];
    let product = g.mean_mai * g.mean_af;
    ensure(
        (g.mean_cap - 4.5).abs() < 1e-12 && (product - 3.75).abs() < 1e-12,
        format!("mean CAP {} vs product {}", g.mean_cap, product),
    )?;
    Ok(format!("1000 images max err {worst:.1e}; (1.55, 2, 3.10); mean CAP 4.5 vs 3.75"))
}

fn parser_roundtrip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words = ["shadow", "hand", "glow", "cup", "twisted", "Clock", "face's", "(left)", "blur,", "sign-post"];
    let text = |rng: &mut ChaCha8Rng| {
        let lines = rng.random_range(1..=2);
        (0..lines)
            .map(|_| (0..rng.random_range(1..=6)).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..=5);
        let records: Vec<AnomalyRecord> = (0..n)
            .map(|_| {
                let name = text(&mut rng).replace('\n', " ");
                let phe = text(&mut rng);
                let rea = text(&mut rng);
                AnomalyRecord::new(name, phe, rea, rng.random_range(0..=1000) as f64 / 10.0).unwrap()
            })
            .collect();
        let report = parse_structured_list(&format_structured_list(&records));
        if report.records != records || !report.skipped_blocks.is_empty() {
            failures += 1;
        }
    }
    ensure(failures == 0, format!("{failures} of 1000 lists changed"))?;
    let chair = "@1. **Name**: Suspended chair without support\n- **Observed Phenomenon**: A wooden chair is floating approximately 30 cm above the ground without visible support or shadows.\n- **Reasoning**: Gravity requires contact or suspension; absence of legs, shadows, or wires defies physical realism.\n- **Severity Score**: 10/100 (extremely unnatural)";
    let r = parse_structured_list(chair);
    ensure(r.records.len() == 1 && r.records[0].severity == 10.0, "suspended chair example did not parse to severity 10")?;
    Ok("1000 lists identical after format->parse; suspended chair -> severity 10".into())
}

fn pipeline_call_graph() -> Check {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = AgentConfig {
        t_runs: 3,
        cache_dir: Some(dir.path().to_path_buf()),
        backoff_ms: 1,
        ..AgentConfig::default()
    };
    let input = ImageInput {
        image_id: "scene".into(),
        image_uri: "scene.png".into(),
        mime: "image/png".into(),
        bytes: b"scene pixels".to_vec(),
    };
    let mock = MockBackend::new();
    let (state, _) = Pipeline::new(&mock, cfg.clone())
        .map_err(|e| e.to_string())?
        .run_image(&input)
        .map_err(|e| e.to_string())?;
    let objects = state.objects.len();
    ensure(objects == 2, format!("{objects} objects detected"))?;
    // perception x T, per object 2 attribute + 2 relation, per-object + global integration, formatter
    let closed_form = 3 + objects * (2 + 2) + (objects + 1) + 1;
    ensure(mock.call_count() == closed_form, format!("cold calls {} vs {closed_form}", mock.call_count()))?;
    ensure(
        state.token_usage.total.total() == mock.reported_tokens(),
        format!("ledger {} vs mock {}", state.token_usage.total.total(), mock.reported_tokens()),
    )?;
    ensure(!state.final_records.is_empty(), "no final records")?;
    for r in &state.final_records {
        r.validate().map_err(|e| e.to_string())?;
    }
    let warm_mock = MockBackend::new();
    let (warm, _) = Pipeline::new(&warm_mock, cfg)
        .map_err(|e| e.to_string())?
        .run_image(&input)
        .map_err(|e| e.to_string())?;
    ensure(warm_mock.call_count() == 0, format!("warm calls {}", warm_mock.call_count()))?;
    ensure(warm == state, "warm state differs")?;
    within(started.elapsed(), 5.0)?;
    Ok(format!(
        "cold {} calls (= 3 + 2*(2+2) + (2+1) + 1; the stated total 14 does not match this sum), warm 0; ledger {} tokens = mock sum; {} records valid; {:.3}s",
        mock.call_count(),
        mock.reported_tokens(),
        state.final_records.len(),
        started.elapsed().as_secs_f64()
    ))
}

fn verdict(image_id: &str, idx: usize, decision: Decision, t: i64) -> Verdict {
    Verdict {
        image_id: image_id.into(),
        anomaly_index: idx,
        decision,
        annotator_id: "screener".into(),
        timestamp: chrono::DateTime::from_timestamp(1_700_000_000 + t, 0).unwrap(),
    }
}

fn hitl_finalize() -> Check {
    let cands = vec![ImageAnnotation::new(
        "one",
        "one.png",
        Provenance::AgentRaw,
        ["a", "b", "c"].iter().map(|n| AnomalyRecord::new(*n, "p", "r", 10.0).unwrap()).collect(),
    )];
    let log = [
        verdict("one", 0, Decision::Accept, 0),
        verdict("one", 1, Decision::Reject, 1),
        verdict("one", 2, Decision::Unsure, 2),
    ];
    let r = finalize(&cands, &log, FinalizeMode::Strict).map_err(|e| e.to_string())?;
    ensure(
        r.annotations[0].anomalies.len() == 1 && r.annotations[0].anomalies[0].name == "a",
        "accept/reject/unsure did not keep exactly the accepted candidate",
    )?;

    // 50 images x 8 candidates, 26% (104) answered reject or unsure
    let anns: Vec<ImageAnnotation> = (0..50)
        .map(|i| {
            ImageAnnotation::new(
                format!("i{i:02}"),
                format!("i{i:02}.png"),
                Provenance::AgentRaw,
                (0..8).map(|k| AnomalyRecord::new(format!("c{k}"), "p", "r", 50.0).unwrap()).collect(),
            )
        })
        .collect();
    let mut items: Vec<(String, usize)> = anns.iter().flat_map(|a| (0..8).map(|k| (a.image_id.clone(), k))).collect();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(26));
    let log: Vec<Verdict> = items
        .iter()
        .enumerate()
        .map(|(n, (id, k))| {
            let d = if n < 70 {
                Decision::Reject
            } else if n < 104 {
                Decision::Unsure
            } else {
                Decision::Accept
            };
            verdict(id, *k, d, n as i64)
        })
        .collect();
    let r = finalize(&anns, &log, FinalizeMode::Strict).map_err(|e| e.to_string())?;
    let (before, after) = (r.mean_before(), r.mean_after());
    ensure(before == 8.0, format!("mean before {before}"))?;
    ensure((after - 5.9).abs() <= 0.1, format!("mean after {after}"))?;
    Ok(format!("{{accept,reject,unsure}} -> {{a}}; 26% non-accept: {before:.1} -> {after:.2} per image"))
}

fn offline_binary_runs() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dead = format!(
        "http://127.0.0.1:{}",
        std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
    );
    let bin = env!("CARGO_BIN_EXE_anomkit");
    let cmd = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .env("HTTP_PROXY", &dead)
            .env("HTTPS_PROXY", &dead)
            .env("ALL_PROXY", &dead)
            .env_remove("OPENAI_API_KEY")
            .output()
            .map_err(|e| e.to_string())
    };
    let p = |x: &Path| x.to_str().unwrap().to_string();

    let images = dir.path().join("images");
    std::fs::create_dir(&images).unwrap();
    std::fs::write(images.join("a.png"), b"a").unwrap();
    let config = dir.path().join("agent.conf");
    std::fs::write(&config, format!("endpoint = {dead}/v1/chat/completions\n")).unwrap();
    let out = dir.path().join("out");
    let o = cmd(&["annotate", "--images", &p(&images), "--config", &p(&config), "--out", &p(&out), "--backend", "mock"])?;
    ensure(o.status.success(), format!("annotate --backend mock: {}", String::from_utf8_lossy(&o.stderr)))?;

    let cands = out.join("candidates.jsonl");
    let o = cmd(&["evaluate", "--gt", &p(&cands), "--pred", &p(&cands), "--backend", "surrogate"])?;
    ensure(o.status.success(), format!("evaluate: {}", String::from_utf8_lossy(&o.stderr)))?;
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).map_err(|e| e.to_string())?;
    ensure(r["Full"]["sem_ap"] == 1.0, "evaluate on identical files is not 1.0")?;
    let o = cmd(&["audit", "--annotations", &p(&cands)])?;
    ensure(o.status.success(), "audit failed")?;
    let o = cmd(&["stats", "--annotations", &p(&cands)])?;
    ensure(o.status.success(), "stats failed")?;
    ensure(jsonl::load_annotations(&cands).map_err(|e| e.to_string())?.len() == 1, "candidate count")?;
    Ok("annotate (mock), evaluate (surrogate), audit, stats run offline with proxies pointed at a closed port; no UI build needed".into())
}

fn main() {
    let thresholds = ThresholdSet::default();
    assert_eq!(thresholds.as_slice(), &TAUS);
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("AP fixture", ap_fixture),
        ("Identity suite", identity_suite),
        ("Threshold monotonicity", monotonicity),
        ("Greedy-match oracle", greedy_oracle),
        ("CSem gating", csem_gating),
        ("Audit identities", audit_identities),
        ("Parser round-trip", parser_roundtrip),
        ("Pipeline call graph", pipeline_call_graph),
        ("HITL finalize", hitl_finalize),
    ];
    let mut failed = 0;
    let report = |name: &str, started: Instant, result: Check| -> bool {
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                println!("PASS  {name:<24} {detail}  [{secs:.2}s]");
                true
            }
            Err(why) => {
                println!("FAIL  {name:<24} {why}  [{secs:.2}s]");
                false
            }
        }
    };
    let total = criteria.len() + 1;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        if !report(name, started, result) {
            failed += 1;
        }
    }
    let started = Instant::now();
    let prior_failures = failed;
    let result = std::panic::catch_unwind(offline_binary_runs)
        .unwrap_or_else(|_| Err("panicked".into()))
        .and_then(|d| {
            ensure(prior_failures == 0, format!("{prior_failures} criteria above failed"))?;
            Ok(d)
        });
    if !report("Offline, no UI", started, result) {
        failed += 1;
    }
    println!("\n{} of {total} criteria passed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
