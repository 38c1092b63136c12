//! Three-stage annotation of one image.
//!
//! Stage 1 runs object perception `T` times and unions the object lists.
//! Stage 2 runs, per object and concurrently across objects, attribute
//! analysis (two steps) followed by relation reasoning (two steps, skipped
//! when the object is alone). Stage 3 integrates per object, integrates
//! globally and formats the final `@k.` list, which is parsed into records.
//!
//! Every call goes through the stage cache and a retry loop. Failures after
//! retries degrade the affected stage and add a warning; only the loss of all
//! perception runs or an unreadable image fails the image.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anomkit_core::parser::{parse_structured_list, SkippedBlock};
use anomkit_core::{AnomalyRecord, ImageAnnotation, Provenance};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::cache::{sha256_hex, StageCache, StageKey};
use crate::chat::{data_uri, ChatBackend, ChatError, ChatMessage, ChatReply, ChatRequest};
use crate::config::AgentConfig;
use crate::parse::{parse_candidates, parse_object_list, union_objects, CandidateAnomaly, DetectedObject, Origin};
use crate::prompts::{self, Stage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("image {image_id}: all {runs} object-perception runs failed; last error: {last}")]
    PerceptionFailed {
        image_id: String,
        runs: usize,
        last: ChatError,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

#[derive(Debug, Clone)]
pub struct ImageInput {
    pub image_id: String,
    pub image_uri: String,
    pub mime: String,
    pub bytes: Vec<u8>,
}

impl ImageInput {
    /// Read an image file; the id is the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| PipelineError::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let image_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image")
            .to_string();
        Ok(Self {
            image_id,
            image_uri: path.display().to_string(),
            mime: mime_for(path).to_string(),
            bytes,
        })
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }

    fn of(reply: &ChatReply) -> Self {
        Self {
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub per_stage: BTreeMap<Stage, TokenUsage>,
    pub total: TokenUsage,
}

impl TokenLedger {
    /// Running totals in pipeline stage order.
    pub fn cumulative(&self) -> Vec<(Stage, u64)> {
        let mut acc = 0;
        self.per_stage
            .iter()
            .map(|(s, u)| {
                acc += u.total();
                (*s, acc)
            })
            .collect()
    }
}

/// One stage call and its outcome, kept for replicability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCall {
    pub stage: Stage,
    pub object: String,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub image_id: String,
    pub image_uri: String,
    pub image_sha256: String,
    pub objects: Vec<DetectedObject>,
    pub attr_candidates: BTreeMap<String, Vec<CandidateAnomaly>>,
    pub rel_candidates: BTreeMap<String, Vec<CandidateAnomaly>>,
    pub integrated: Vec<CandidateAnomaly>,
    #[serde(rename = "final")]
    pub final_records: Vec<AnomalyRecord>,
    pub skipped_blocks: Vec<SkippedBlock>,
    pub token_usage: TokenLedger,
    pub warnings: Vec<String>,
    pub calls: Vec<StageCall>,
    pub config_snapshot: AgentConfig,
}

impl PipelineState {
    pub fn is_degraded(&self) -> bool {
        !self.warnings.is_empty()
    }

    pub fn to_annotation(&self) -> ImageAnnotation {
        ImageAnnotation::new(
            self.image_id.clone(),
            self.image_uri.clone(),
            Provenance::AgentRaw,
            self.final_records.clone(),
        )
    }

    /// Write `<dir>/<image_id>.json` (pretty-printed).
    pub fn save(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let path = dir.join(format!("{}.json", self.image_id));
        let write_err = |source| PipelineError::Write {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(write_err)?;
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        std::fs::write(&path, text + "\n").map_err(write_err)?;
        Ok(path)
    }
}

/// Backend traffic of one run, as opposed to the ledger in the state, which
/// also counts replies served from the cache.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub failed_calls: usize,
    pub fresh_tokens: TokenUsage,
}

impl RunStats {
    pub fn add(&mut self, other: &RunStats) {
        self.backend_calls += other.backend_calls;
        self.cache_hits += other.cache_hits;
        self.failed_calls += other.failed_calls;
        self.fresh_tokens.add(other.fresh_tokens);
    }
}

/// Per-image bookkeeping shared by concurrent stage calls.
struct ImageCtx {
    sha: String,
    image_url: String,
    calls: Mutex<Vec<((Stage, usize), StageCall, Option<TokenUsage>)>>,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    failed: AtomicUsize,
    fresh_prompt: AtomicU64,
    fresh_completion: AtomicU64,
}

pub struct Pipeline<'a> {
    backend: &'a dyn ChatBackend,
    config: AgentConfig,
    cache: StageCache,
}

struct ObjectOutcome {
    attr_response: Option<String>,
    attr: Vec<CandidateAnomaly>,
    rel_response: Option<String>,
    rel: Vec<CandidateAnomaly>,
    warnings: Vec<String>,
}

impl<'a> Pipeline<'a> {
    /// A pipeline using the configured cache directory, or an in-memory cache.
    pub fn new(backend: &'a dyn ChatBackend, config: AgentConfig) -> std::io::Result<Self> {
        let cache = match &config.cache_dir {
            Some(dir) => StageCache::on_disk(dir)?,
            None => StageCache::in_memory(),
        };
        Ok(Self::with_cache(backend, config, cache))
    }

    pub fn with_cache(backend: &'a dyn ChatBackend, config: AgentConfig, cache: StageCache) -> Self {
        Self { backend, config, cache }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    fn call(&self, ctx: &ImageCtx, stage: Stage, slot: usize, object: &str, prompt: String) -> Result<ChatReply, ChatError> {
        let key = StageKey::new(&ctx.sha, stage, object, &prompt, self.backend.model_id());
        let record = |reply: &Result<ChatReply, ChatError>| {
            let call = StageCall {
                stage,
                object: object.to_string(),
                response: reply.as_ref().ok().map(|r| r.text.clone()),
                error: reply.as_ref().err().map(ToString::to_string),
            };
            let usage = reply.as_ref().ok().map(TokenUsage::of);
            ctx.calls.lock().expect("ctx lock").push(((stage, slot), call, usage));
        };
        if let Some(reply) = self.cache.get(&key) {
            ctx.cache_hits.fetch_add(1, Ordering::SeqCst);
            let out = Ok(reply);
            record(&out);
            return out;
        }
        let request = ChatRequest {
            model: self.backend.model_id().to_string(),
            messages: vec![ChatMessage::user(prompt, Some(&ctx.image_url))],
        };
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let attempts = self.config.retry_budget + 1;
        let mut result = Err(ChatError::Transport("not attempted".into()));
        for attempt in 1..=attempts {
            ctx.backend_calls.fetch_add(1, Ordering::SeqCst);
            result = self.backend.send(&request);
            match &result {
                Ok(reply) => {
                    ctx.fresh_prompt.fetch_add(reply.prompt_tokens, Ordering::SeqCst);
                    ctx.fresh_completion.fetch_add(reply.completion_tokens, Ordering::SeqCst);
                    self.cache.put(&key, reply);
                    break;
                }
                Err(e) => {
                    ctx.failed.fetch_add(1, Ordering::SeqCst);
                    warn!(%stage, object, attempt, "chat call failed: {e}");
                    if !e.is_retryable() || attempt == attempts {
                        break;
                    }
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
        record(&result);
        result
    }

    fn analyze_object(&self, ctx: &ImageCtx, idx: usize, obj: &DetectedObject, others: &str) -> ObjectOutcome {
        let name = obj.name.as_str();
        let mut out = ObjectOutcome {
            attr_response: None,
            attr: Vec::new(),
            rel_response: None,
            rel: Vec::new(),
            warnings: Vec::new(),
        };
        match self
            .call(ctx, Stage::AttributeStep1, idx, name, prompts::attribute_step1(name))
            .and_then(|r1| self.call(ctx, Stage::AttributeStep2, idx, name, prompts::attribute_step2(name, &r1.text)))
        {
            Ok(r2) => {
                out.attr = parse_candidates(&r2.text, Origin::Attribute, name);
                out.attr_response = Some(r2.text);
            }
            Err(e) => out.warnings.push(format!("attribute analysis of `{name}` failed: {e}")),
        }
        if others.is_empty() {
            debug!(object = name, "single object, relation reasoning skipped");
            return out;
        }
        let context = format!(
            "{name}: {}\n{}",
            obj.description,
            out.attr_response.as_deref().unwrap_or("(no attribute findings)")
        );
        match self
            .call(ctx, Stage::RelationStep1, idx, name, prompts::relation_step1(name, others, &context))
            .and_then(|r1| self.call(ctx, Stage::RelationStep2, idx, name, prompts::relation_step2(name, others, &r1.text)))
        {
            Ok(r2) => {
                out.rel = parse_candidates(&r2.text, Origin::Relation, name);
                out.rel_response = Some(r2.text);
            }
            Err(e) => out.warnings.push(format!("relation reasoning for `{name}` failed: {e}")),
        }
        out
    }

    /// Run all stages for one image.
    pub fn run_image(&self, input: &ImageInput) -> Result<(PipelineState, RunStats), PipelineError> {
        let ctx = ImageCtx {
            sha: input.sha256(),
            image_url: data_uri(&input.mime, &input.bytes),
            calls: Mutex::new(Vec::new()),
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            failed: AtomicUsize::new(0),
            fresh_prompt: AtomicU64::new(0),
            fresh_completion: AtomicU64::new(0),
        };
        let mut warnings = Vec::new();
        let t = self.config.t_runs;

        // Stage 1
        let runs: Vec<Result<Vec<DetectedObject>, ChatError>> = (0..t)
            .into_par_iter()
            .map(|run| {
                self.call(&ctx, Stage::ObjectPerceiver, run, "", prompts::object_perceiver(run, t))
                    .map(|r| parse_object_list(&r.text))
            })
            .collect();
        let mut ok_runs = Vec::new();
        let mut last_err = None;
        for (run, r) in runs.into_iter().enumerate() {
            match r {
                Ok(objs) => ok_runs.push(objs),
                Err(e) => {
                    warnings.push(format!("object perception run {} failed: {e}", run + 1));
                    last_err = Some(e);
                }
            }
        }
        if ok_runs.is_empty() {
            return Err(PipelineError::PerceptionFailed {
                image_id: input.image_id.clone(),
                runs: t,
                last: last_err.unwrap_or_else(|| ChatError::Transport("no runs".into())),
            });
        }
        let objects = union_objects(&ok_runs);
        if objects.is_empty() {
            warnings.push("no objects detected".into());
        }
        let names: Vec<&str> = objects.iter().map(|o| o.name.as_str()).collect();
        let others_of = |i: usize| {
            names
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, n)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        };

        // Stage 2
        let outcomes: Vec<ObjectOutcome> = objects
            .par_iter()
            .enumerate()
            .map(|(i, obj)| self.analyze_object(&ctx, i, obj, &others_of(i)))
            .collect();
        let mut attr_candidates = BTreeMap::new();
        let mut rel_candidates = BTreeMap::new();
        for (obj, o) in objects.iter().zip(&outcomes) {
            warnings.extend(o.warnings.iter().cloned());
            attr_candidates.insert(obj.name.clone(), o.attr.clone());
            rel_candidates.insert(obj.name.clone(), o.rel.clone());
        }
        let candidate_count: usize = outcomes.iter().map(|o| o.attr.len() + o.rel.len()).sum();

        // Stage 3
        let mut integrated = Vec::new();
        let mut final_records = Vec::new();
        let mut skipped_blocks = Vec::new();
        if candidate_count == 0 {
            if !objects.is_empty() {
                warnings.push("no candidate anomalies; integration and formatting skipped".into());
            }
        } else {
            let sections: Vec<Option<String>> = objects
                .par_iter()
                .zip(outcomes.par_iter())
                .enumerate()
                .map(|(i, (obj, o))| {
                    if o.attr.is_empty() && o.rel.is_empty() {
                        return None;
                    }
                    let prompt = prompts::integrator_step1(
                        &obj.name,
                        &others_of(i),
                        o.attr_response.as_deref().unwrap_or("None"),
                        o.rel_response.as_deref().unwrap_or("None"),
                    );
                    let body = match self.call(&ctx, Stage::IntegratorStep1, i, &obj.name, prompt) {
                        Ok(r) => r.text,
                        // fall back to the raw candidates of this object
                        Err(_) => o.attr.iter().chain(&o.rel).map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n\n"),
                    };
                    Some(format!("{}:\n{}", obj.name, body.trim()))
                })
                .collect();
            for (obj, o) in objects.iter().zip(&outcomes) {
                let failed = ctx.calls.lock().expect("ctx lock").iter().any(|(_, c, _)| {
                    c.stage == Stage::IntegratorStep1 && c.object == obj.name && c.error.is_some()
                });
                if failed && !(o.attr.is_empty() && o.rel.is_empty()) {
                    warnings.push(format!("per-object integration of `{}` failed; raw candidates passed on", obj.name));
                }
            }
            let step1 = sections.into_iter().flatten().collect::<Vec<_>>().join("\n\n");
            let step2 = match self.call(&ctx, Stage::IntegratorStep2, 0, "", prompts::integrator_step2(&step1)) {
                Ok(r) => {
                    integrated = parse_candidates(&r.text, Origin::Integrated, "");
                    r.text
                }
                Err(e) => {
                    warnings.push(format!("global integration failed: {e}; per-object summaries passed on"));
                    step1
                }
            };
            match self.call(&ctx, Stage::Formatter, 0, "", prompts::formatter(&step2)) {
                Ok(r) => {
                    let report = parse_structured_list(&r.text);
                    for s in &report.skipped_blocks {
                        warnings.push(format!("formatter block {} skipped: {}", s.block_index + 1, s.reason));
                    }
                    if report.records.is_empty() {
                        warnings.push("formatter output contained no parseable anomaly".into());
                    }
                    final_records = report.records;
                    skipped_blocks = report.skipped_blocks;
                }
                Err(e) => warnings.push(format!("formatting failed: {e}")),
            }
        }

        let mut calls = ctx.calls.into_inner().expect("ctx lock");
        calls.sort_by_key(|(k, _, _)| *k);
        let mut token_usage = TokenLedger::default();
        for ((stage, _), _, usage) in &calls {
            if let Some(u) = usage {
                token_usage.per_stage.entry(*stage).or_default().add(*u);
                token_usage.total.add(*u);
            }
        }
        let stats = RunStats {
            backend_calls: ctx.backend_calls.load(Ordering::SeqCst),
            cache_hits: ctx.cache_hits.load(Ordering::SeqCst),
            failed_calls: ctx.failed.load(Ordering::SeqCst),
            fresh_tokens: TokenUsage {
                prompt_tokens: ctx.fresh_prompt.load(Ordering::SeqCst),
                completion_tokens: ctx.fresh_completion.load(Ordering::SeqCst),
            },
        };
        let state = PipelineState {
            image_id: input.image_id.clone(),
            image_uri: input.image_uri.clone(),
            image_sha256: ctx.sha,
            objects,
            attr_candidates,
            rel_candidates,
            integrated,
            final_records,
            skipped_blocks,
            token_usage,
            warnings,
            calls: calls.into_iter().map(|(_, c, _)| c).collect(),
            config_snapshot: self.config.clone(),
        };
        Ok((state, stats))
    }

    /// Run many images with at most `parallelism` images in flight. Results
    /// keep input order.
    pub fn run_batch(&self, inputs: &[ImageInput]) -> Vec<Result<(PipelineState, RunStats), PipelineError>> {
        let run = || inputs.par_iter().map(|i| self.run_image(i)).collect();
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism.max(1))
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}
