//! `anomkit`: every workflow behind one binary.
//!
//! Exit codes: 0 success, 1 partial success (some images failed), 2 failure.

pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anomkit_agent::chat::ChatBackend;
use anomkit_agent::{AgentConfig, HttpChatBackend, ImageInput, MockBackend, Pipeline, PipelineError};
use anomkit_core::audit::{audit_annotations, dataset_stats, leaderboard_table, stats_table};
use anomkit_core::metrics::{evaluate, evaluate_classified, ConfidenceMode, EvalOptions};
use anomkit_core::similarity::{RemoteBackend, RemoteConfig, ScoreCache, SimilarityBackend, SurrogateBackend};
use anomkit_core::{jsonl, SimilarityConfig, ThresholdSet, View};
use anomkit_review::log::read_log;
use anomkit_review::{finalize, router, FinalizeMode, ReviewService, VerdictLog};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::manifest::{manifest_path_for, RunManifest, TokenTotals};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
    Failure,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Self::Success => 0,
            Self::Partial => 1,
            Self::Failure => 2,
        }
    }

    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

#[derive(Debug, Parser)]
#[command(name = "anomkit", version, about = "Structured semantic-anomaly annotation, review and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the annotation pipeline over a directory of images.
    Annotate(AnnotateArgs),
    /// Serve the review API over a candidate set.
    ReviewServe(ReviewServeArgs),
    /// Keep the candidates whose latest verdict is accept.
    Finalize(FinalizeArgs),
    /// SemAP / SemF1 of predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Detection accuracy plus classification-gated CSemAP / CSemF1.
    EvaluateDeepfake(EvaluateArgs),
    /// Per-generator MAI / AF / CAP leaderboard.
    Audit(AuditArgs),
    /// Dataset statistics, optionally before and after review.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChatBackendKind {
    /// The configured OpenAI-compatible endpoint.
    Http,
    /// Deterministic offline replies.
    Mock,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// `key = value` or JSON pipeline config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "http")]
    pub backend: ChatBackendKind,
    /// Images processed concurrently (overrides the config).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReviewServeArgs {
    /// Agent candidates (annotation JSONL).
    #[arg(long)]
    pub candidates: PathBuf,
    /// Verdict log (JSONL), created if missing.
    #[arg(long)]
    pub log: PathBuf,
    /// Directory relative image URIs resolve against; defaults to the
    /// candidates file's directory.
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct FinalizeArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Final annotation JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop candidates without a verdict instead of failing.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimilarityKind {
    /// Token-overlap F1, offline.
    Surrogate,
    /// BERTScore over HTTP (see tools/bertscore_sidecar.py).
    Bertscore,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value = "surrogate")]
    pub backend: SimilarityKind,
    /// Scoring endpoint for the bertscore backend.
    #[arg(long, default_value = "http://127.0.0.1:8765/score")]
    pub endpoint: String,
    /// Persistent score cache (JSONL) for the bertscore backend.
    #[arg(long)]
    pub score_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value = "0.7,0.8,0.9")]
    pub thresholds: String,
    #[arg(long, default_value = "inv_severity")]
    pub confidence: String,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-image, per-view, per-threshold rows.
    #[arg(long)]
    pub per_image_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "generator_tag")]
    pub group_by: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// A second annotation file, e.g. the finalized set, shown beside the first.
    #[arg(long)]
    pub after: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Annotate(a) => annotate(&a),
        Command::ReviewServe(a) => review_serve(&a),
        Command::Finalize(a) => finalize_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a, false),
        Command::EvaluateDeepfake(a) => evaluate_cmd(&a, true),
        Command::Audit(a) => audit_cmd(&a),
        Command::Stats(a) => stats_cmd(&a),
    }
}

const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "webp", "gif", "bmp"];

/// Image files directly inside `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn annotate(args: &AnnotateArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::start("annotate");
    let mut config = match &args.config {
        Some(p) => AgentConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => AgentConfig::default(),
    };
    if let Some(j) = args.jobs {
        config.parallelism = j.max(1);
    }
    // reruns into the same output directory hit the cache by default
    if config.cache_dir.is_none() {
        config.cache_dir = Some(args.out.join("cache"));
    }
    let backend: Box<dyn ChatBackend> = match args.backend {
        ChatBackendKind::Mock => Box::new(MockBackend::new()),
        ChatBackendKind::Http => {
            let key = config.api_key();
            if key.is_none() {
                tracing::warn!("no API key found in ${}", config.api_key_env.as_deref().unwrap_or("?"));
            }
            Box::new(HttpChatBackend::new(
                config.endpoint.clone(),
                config.model.clone(),
                key,
                std::time::Duration::from_secs(config.timeout_secs),
            ))
        }
    };
    let states_dir = args.out.join("states");
    std::fs::create_dir_all(&states_dir).with_context(|| format!("creating {}", states_dir.display()))?;
    let paths = list_images(&args.images)?;
    manifest.input("images", &args.images);
    if let Some(p) = &args.config {
        manifest.input("config", p);
    }
    manifest.config = json!({
        "pipeline": config,
        "backend": format!("{:?}", args.backend).to_lowercase(),
        "model": backend.model_id(),
    });

    let mut failures: Vec<(String, String)> = Vec::new();
    let mut inputs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in &paths {
        match ImageInput::load(p) {
            Ok(i) if !seen.insert(i.image_id.clone()) => {
                failures.push((i.image_id.clone(), format!("duplicate image id from {}", p.display())))
            }
            Ok(i) => inputs.push(i),
            Err(e) => failures.push((p.display().to_string(), e.to_string())),
        }
    }

    let pipeline = Pipeline::new(backend.as_ref(), config.clone()).context("opening stage cache")?;
    let results = pipeline.run_batch(&inputs);
    let mut annotations = Vec::new();
    let mut totals = TokenTotals::default();
    let mut stats = anomkit_agent::RunStats::default();
    let mut degraded = 0;
    let mut unreachable = 0;
    for (input, result) in inputs.iter().zip(results) {
        match result {
            Ok((state, run)) => {
                state.save(&states_dir)?;
                if state.is_degraded() {
                    degraded += 1;
                    for w in &state.warnings {
                        tracing::warn!(image = %state.image_id, "{w}");
                    }
                }
                totals.ledger_total += state.token_usage.total.total();
                stats.add(&run);
                annotations.push(state.to_annotation());
            }
            Err(e) => {
                if let PipelineError::PerceptionFailed {
                    last: anomkit_agent::ChatError::Transport(_),
                    ..
                } = &e
                {
                    unreachable += 1;
                }
                eprintln!("image {}: {e}", input.image_id);
                failures.push((input.image_id.clone(), e.to_string()));
            }
        }
    }
    totals.fresh_prompt = stats.fresh_tokens.prompt_tokens;
    totals.fresh_completion = stats.fresh_tokens.completion_tokens;
    totals.fresh_total = stats.fresh_tokens.total();

    let candidates = args.out.join("candidates.jsonl");
    jsonl::save_annotations(&annotations, &candidates)?;
    let attempted = paths.len();
    let ok = annotations.len();
    let outcome = if attempted > 0 && ok == attempted {
        Outcome::Success
    } else if ok > 0 {
        Outcome::Partial
    } else {
        Outcome::Failure
    };
    manifest.output("candidates", &candidates).output("states", &states_dir);
    manifest.tokens = Some(totals);
    manifest.summary = json!({
        "images": attempted,
        "annotated": ok,
        "degraded": degraded,
        "failed": failures.iter().map(|(id, e)| json!({"image": id, "error": e})).collect::<Vec<_>>(),
        "anomalies": annotations.iter().map(|a| a.anomalies.len()).sum::<usize>(),
        "backend_calls": stats.backend_calls,
        "cache_hits": stats.cache_hits,
    });
    manifest.exit_code = outcome.code();
    manifest.write(&args.out.join("manifest.json"))?;

    println!(
        "annotated {ok}/{attempted} images ({degraded} degraded); {} backend calls, {} cache hits, {} new tokens",
        stats.backend_calls, stats.cache_hits, totals.fresh_total
    );
    if attempted == 0 {
        eprintln!("no images (png, jpg, jpeg, webp, gif, bmp) found in {}", args.images.display());
    } else if ok == 0 && unreachable > 0 && args.backend == ChatBackendKind::Http {
        eprintln!(
            "chat endpoint {} could not be reached; check `endpoint` in the config, or pass --backend mock for an offline run",
            config.endpoint
        );
    }
    Ok(outcome)
}

pub fn review_serve(args: &ReviewServeArgs) -> Result<Outcome> {
    let annotations = jsonl::load_annotations(&args.candidates)?;
    let log = VerdictLog::open(&args.log)?;
    let root = args
        .images
        .clone()
        .or_else(|| args.candidates.parent().map(Path::to_path_buf));
    let service = Arc::new(ReviewService::new(log, root));
    let items = service.load(annotations)?;
    let mut manifest = RunManifest::start("review-serve");
    manifest.input("candidates", &args.candidates).output("log", &args.log);
    manifest.config = json!({"addr": args.addr, "images": args.images});
    manifest.summary = json!({"items": items, "progress_at_start": service.progress()});
    manifest.write(&manifest_path_for(&args.log))?;

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.addr)
            .await
            .with_context(|| format!("binding {}", args.addr))?;
        println!("review API on http://{} ({items} candidates)", listener.local_addr()?);
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(Outcome::Success)
}

pub fn finalize_cmd(args: &FinalizeArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::start("finalize");
    let annotations = jsonl::load_annotations(&args.candidates)?;
    let verdicts = read_log(&args.log)?;
    let mode = if args.partial { FinalizeMode::Partial } else { FinalizeMode::Strict };
    let report = finalize(&annotations, &verdicts, mode)?;
    jsonl::save_annotations(&report.annotations, &args.out)?;
    let report_path = args.out.with_extension("report.json");
    write_json(
        &report_path,
        &json!({
            "per_image": report.per_image,
            "mean_before": report.mean_before(),
            "mean_after": report.mean_after(),
            "unsure": report.unsure,
            "dropped_pending": report.dropped_pending,
        }),
    )?;

    println!("{:<24}{:>8}{:>8}{:>10}{:>8}{:>9}", "image", "before", "after", "rejected", "unsure", "pending");
    for c in &report.per_image {
        println!(
            "{:<24}{:>8}{:>8}{:>10}{:>8}{:>9}",
            c.image_id, c.before, c.after, c.rejected, c.unsure, c.pending
        );
    }
    println!(
        "mean candidates per image: {:.2} -> {:.2} ({} of {} kept)",
        report.mean_before(),
        report.mean_after(),
        report.total_after(),
        report.total_before()
    );

    manifest.input("candidates", &args.candidates).input("log", &args.log);
    manifest.output("annotations", &args.out).output("report", &report_path);
    manifest.config = json!({"partial": args.partial});
    manifest.summary = json!({
        "images": report.per_image.len(),
        "before": report.total_before(),
        "after": report.total_after(),
        "unsure": report.unsure.len(),
        "dropped_pending": report.dropped_pending.len(),
    });
    manifest.write(&manifest_path_for(&args.out))?;
    Ok(Outcome::Success)
}

struct Scoring {
    backend: Box<dyn SimilarityBackend>,
    remote_cache: Option<Arc<ScoreCache>>,
}

fn scoring(args: &EvaluateArgs) -> Result<Scoring> {
    Ok(match args.backend {
        SimilarityKind::Surrogate => Scoring {
            backend: Box::new(SurrogateBackend),
            remote_cache: None,
        },
        SimilarityKind::Bertscore => {
            let cache = Arc::new(match &args.score_cache {
                Some(p) => ScoreCache::open(p)?,
                None => ScoreCache::in_memory(),
            });
            Scoring {
                backend: Box::new(RemoteBackend::new(RemoteConfig::new(&args.endpoint), cache.clone())),
                remote_cache: Some(cache),
            }
        }
    })
}

pub fn eval_options(args: &EvaluateArgs, backend_id: &str) -> Result<EvalOptions> {
    let thresholds: ThresholdSet = args.thresholds.parse()?;
    let confidence: ConfidenceMode = args
        .confidence
        .parse()
        .map_err(|e| anyhow::anyhow!("--confidence: {e}"))?;
    Ok(EvalOptions {
        thresholds,
        similarity: SimilarityConfig::new(args.alpha, backend_id)?,
        confidence,
        jobs: args.jobs,
    })
}

fn headline_table(rows: &[(View, f64, f64)], ap: &str, f1: &str) -> String {
    let mut out = format!("{:<6}{:>10}{:>10}\n", "view", ap, f1);
    for (v, a, f) in rows {
        out.push_str(&format!("{:<6}{:>10.4}{:>10.4}\n", v.as_str(), a, f));
    }
    out
}

pub fn evaluate_cmd(args: &EvaluateArgs, classified: bool) -> Result<Outcome> {
    let command = if classified { "evaluate-deepfake" } else { "evaluate" };
    let mut manifest = RunManifest::start(command);
    let gt = jsonl::load_annotations(&args.gt)?;
    let preds = jsonl::load_predictions(&args.pred)?;
    let scoring = scoring(args)?;
    let opts = eval_options(args, scoring.backend.backend_id())?;
    let (report_json, table, per_image) = if classified {
        let r = evaluate_classified(&gt, &preds, &opts, scoring.backend.as_ref())?;
        let rows: Vec<_> = View::ALL
            .iter()
            .map(|v| (*v, r.view(*v).csem_ap, r.view(*v).csem_f1))
            .collect();
        let table = format!(
            "accuracy {:.4} ({}/{})\n{}",
            r.accuracy,
            r.correct,
            r.images,
            headline_table(&rows, "CSemAP", "CSemF1")
        );
        (r.to_json(), table, r.semantic)
    } else {
        let r = evaluate(&gt, &preds, &opts, scoring.backend.as_ref())?;
        let rows: Vec<_> = View::ALL
            .iter()
            .map(|v| (*v, r.view(*v).sem_ap, r.view(*v).sem_f1))
            .collect();
        (r.to_json(), headline_table(&rows, "SemAP", "SemF1"), r)
    };
    if let Some(cache) = &scoring.remote_cache {
        cache.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&report_json)?);
    eprint!("{table}");

    manifest.input("gt", &args.gt).input("pred", &args.pred);
    manifest.config = json!({
        "backend": scoring.backend.backend_id(),
        "alpha": args.alpha,
        "thresholds": opts.thresholds.as_slice(),
        "confidence": opts.confidence.to_string(),
        "jobs": args.jobs,
    });
    manifest.summary = report_json.clone();
    if let Some(csv_path) = &args.per_image_csv {
        let file = std::fs::File::create(csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
        per_image.write_per_image_csv(file)?;
        manifest.output("per_image_csv", csv_path);
    }
    if let Some(out) = &args.out {
        write_json(out, &report_json)?;
        manifest.output("report", out);
        manifest.write(&manifest_path_for(out))?;
    }
    Ok(Outcome::Success)
}

pub fn audit_cmd(args: &AuditArgs) -> Result<Outcome> {
    if args.group_by != "generator_tag" {
        bail!("--group-by: only `generator_tag` is supported, got `{}`", args.group_by);
    }
    let mut manifest = RunManifest::start("audit");
    let annotations = jsonl::load_annotations(&args.annotations)?;
    let (images, leaderboard) = audit_annotations(&annotations);
    let report = json!({
        "leaderboard": leaderboard,
        "per_image": images.iter().map(|(tag, a)| json!({
            "generator_tag": tag,
            "image_id": a.image_id,
            "mai": a.mai,
            "af": a.af,
            "cap": a.cap,
        })).collect::<Vec<_>>(),
    });
    print!("{}", leaderboard_table(&leaderboard));
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        manifest.input("annotations", &args.annotations).output("report", out);
        manifest.config = json!({"group_by": args.group_by});
        manifest.summary = json!({"images": images.len(), "generators": leaderboard.len()});
        manifest.write(&manifest_path_for(out))?;
    }
    Ok(Outcome::Success)
}

pub fn stats_cmd(args: &StatsArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::start("stats");
    let before = dataset_stats(&jsonl::load_annotations(&args.annotations)?);
    let after = match &args.after {
        Some(p) => Some(dataset_stats(&jsonl::load_annotations(p)?)),
        None => None,
    };
    let (table, report) = match &after {
        Some(a) => (
            stats_table(&[("before", &before), ("after", a)]),
            json!({"before": before, "after": a}),
        ),
        None => (stats_table(&[("count", &before)]), json!({"stats": before})),
    };
    print!("{table}");
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        manifest.input("annotations", &args.annotations);
        if let Some(p) = &args.after {
            manifest.input("after", p);
        }
        manifest.output("report", out);
        manifest.summary = report;
        manifest.write(&manifest_path_for(out))?;
    }
    Ok(Outcome::Success)
}
