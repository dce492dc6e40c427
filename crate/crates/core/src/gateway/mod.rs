//! Uniform completion interface over an OpenAI-compatible HTTP endpoint and
//! a deterministic scripted backend, with per-stage query hyperparameters,
//! retry, rate budgets, and an audit trail.

mod http;
mod limit;
mod scripted;

pub use http::{HttpBackend, HttpConfig, RetryPolicy};
pub use limit::{Clock, RateLimiter, SystemClock};
pub use scripted::{FixtureRecord, RecordingBackend, ScriptedBackend};

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::digest::prompt_digest;
use crate::error::{Error, Result};
use crate::templates::Prompt;

pub const MAX_STOP_SEQUENCES: usize = 4;

/// Which pipeline purpose a query serves; selects hyperparameters and tags
/// the audit trail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStage {
    InstructionGen,
    ClfIdentify,
    InstanceGen,
    Evaluate,
}

impl QueryStage {
    pub fn name(self) -> &'static str {
        match self {
            QueryStage::InstructionGen => "instruction_gen",
            QueryStage::ClfIdentify => "clf_identify",
            QueryStage::InstanceGen => "instance_gen",
            QueryStage::Evaluate => "evaluate",
        }
    }
}

/// Full completion-request parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub num_candidates: u32,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.stop.len() > MAX_STOP_SEQUENCES {
            return Err(Error::InvalidParams {
                message: format!(
                    "at most {MAX_STOP_SEQUENCES} stop sequences are supported, got {}",
                    self.stop.len()
                ),
            });
        }
        for (name, v) in [
            ("temperature", self.temperature),
            ("top_p", self.top_p),
            ("frequency_penalty", self.frequency_penalty),
            ("presence_penalty", self.presence_penalty),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParams {
                    message: format!("{name} must be finite"),
                });
            }
        }
        if self.temperature < 0.0 {
            return Err(Error::InvalidParams {
                message: "temperature must be >= 0".into(),
            });
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidParams {
                message: format!("top_p must be in (0, 1], got {}", self.top_p),
            });
        }
        if self.num_candidates == 0 || self.max_tokens == 0 {
            return Err(Error::InvalidParams {
                message: "num_candidates and max_tokens must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Map raw sampling knobs onto valid request values: a nucleus mass of 0 and
/// a candidate count of 0 both mean greedy single-candidate decoding, so
/// they normalize to 1.0 and 1. Returns notes describing what changed.
pub fn normalize_sampling(top_p: f64, num_candidates: u32) -> (f64, u32, Vec<String>) {
    let mut notes = Vec::new();
    let top_p = if top_p == 0.0 {
        notes.push("top_p 0 normalized to 1.0".to_string());
        1.0
    } else {
        top_p
    };
    let n = if num_candidates == 0 {
        notes.push("num_candidates 0 normalized to 1".to_string());
        1
    } else {
        num_candidates
    };
    (top_p, n, notes)
}

fn stops(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// The four named presets this pipeline queries with, one per purpose;
/// zero nucleus mass and zero candidate count in source settings are
/// already normalized per [`normalize_sampling`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub instruction_gen: GenerationParams,
    pub clf_identify: GenerationParams,
    pub instance_gen: GenerationParams,
    pub evaluate: GenerationParams,
}

impl Default for StageParams {
    fn default() -> Self {
        StageParams {
            instruction_gen: GenerationParams {
                temperature: 0.7,
                top_p: 0.5,
                frequency_penalty: 0.0,
                presence_penalty: 2.0,
                num_candidates: 1,
                max_tokens: 1024,
                stop: stops(&["\n\n", "\n16", "16.", "16 ."]),
            },
            clf_identify: GenerationParams {
                temperature: 0.0,
                top_p: 1.0,
                frequency_penalty: 0.0,
                presence_penalty: 0.0,
                num_candidates: 1,
                max_tokens: 3,
                stop: stops(&["\n", "Task:"]),
            },
            instance_gen: GenerationParams {
                temperature: 0.0,
                top_p: 1.0,
                frequency_penalty: 0.0,
                presence_penalty: 1.5,
                num_candidates: 1,
                max_tokens: 300,
                stop: stops(&["Task:"]),
            },
            evaluate: GenerationParams {
                temperature: 0.0,
                top_p: 1.0,
                frequency_penalty: 0.0,
                presence_penalty: 0.0,
                num_candidates: 1,
                max_tokens: 1024,
                stop: Vec::new(),
            },
        }
    }
}

impl StageParams {
    pub fn for_stage(&self, stage: QueryStage) -> &GenerationParams {
        match stage {
            QueryStage::InstructionGen => &self.instruction_gen,
            QueryStage::ClfIdentify => &self.clf_identify,
            QueryStage::InstanceGen => &self.instance_gen,
            QueryStage::Evaluate => &self.evaluate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_endpoint(s: &str) -> Self {
        match s {
            "stop" => FinishReason::Stop,
            "length" => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }

    pub fn hit_length_limit(self) -> bool {
        self == FinishReason::Length
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: Usage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    /// How many attempts the transport needed (1 = no retries).
    pub attempts: u32,
}

/// A completion transport. Implementations must be safe for concurrent
/// callers; retry behavior is the transport's own concern.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult>;

    fn name(&self) -> &'static str {
        "backend"
    }
}

impl<B: CompletionBackend> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult> {
        (**self).complete(prompt, params)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult> {
        (**self).complete(prompt, params)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// One entry of the in-memory call log.
#[derive(Clone, Debug, Serialize)]
pub struct CallRecord {
    pub stage: QueryStage,
    pub prompt_digest: String,
    pub attempts: u32,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    /// Unix milliseconds.
    timestamp: u64,
    stage: QueryStage,
    prompt_digest: &'a str,
    params: &'a GenerationParams,
    finish_reason: FinishReason,
    usage: Usage,
    attempts: u32,
}

/// Batch failure: which indices failed and why, plus whatever completed so
/// the caller can checkpoint partial progress.
#[derive(Debug)]
pub struct BatchError {
    pub failures: Vec<(usize, Error)>,
    pub partial: Vec<Option<CompletionResult>>,
}

impl BatchError {
    pub fn to_error(&self) -> Error {
        Error::BatchFailed {
            indices: self.failures.iter().map(|(i, _)| *i).collect(),
            first_cause: self
                .failures
                .first()
                .map(|(_, e)| e.to_string())
                .unwrap_or_default(),
        }
    }
}

/// Shared front end over a backend: enforces parameter validity, applies
/// rate budgets, logs calls, and accumulates per-stage usage totals.
pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    limiter: Option<RateLimiter>,
    audit: Option<Mutex<std::io::BufWriter<std::fs::File>>>,
    call_log: Mutex<Vec<CallRecord>>,
    totals: Mutex<BTreeMap<QueryStage, Usage>>,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>) -> Self {
        Gateway {
            backend,
            limiter: None,
            audit: None,
            call_log: Mutex::new(Vec::new()),
            totals: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn with_rate_limiter(mut self, limiter: RateLimiter) -> Self {
        self.limiter = Some(limiter);
        self
    }

    /// Append request/response records to `path` as they happen.
    pub fn with_audit_log(mut self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.audit = Some(Mutex::new(std::io::BufWriter::new(file)));
        Ok(self)
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// Issue one completion, returning the endpoint's first candidate.
    pub fn complete(
        &self,
        stage: QueryStage,
        prompt: &Prompt,
        params: &GenerationParams,
    ) -> Result<CompletionResult> {
        params.validate()?;
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let result = self.backend.complete(&prompt.text, params)?;
        if let Some(limiter) = &self.limiter {
            limiter.record_tokens(result.usage.total());
        }
        let digest = prompt_digest(&prompt.text, &params.stop);
        self.record(stage, &digest, params, &result)?;
        Ok(result)
    }

    fn record(
        &self,
        stage: QueryStage,
        digest: &str,
        params: &GenerationParams,
        result: &CompletionResult,
    ) -> Result<()> {
        self.call_log.lock().unwrap().push(CallRecord {
            stage,
            prompt_digest: digest.to_string(),
            attempts: result.attempts,
            finish_reason: result.finish_reason,
            usage: result.usage,
        });
        self.totals
            .lock()
            .unwrap()
            .entry(stage)
            .or_default()
            .add(result.usage);
        if let Some(audit) = &self.audit {
            let record = AuditRecord {
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0),
                stage,
                prompt_digest: digest,
                params,
                finish_reason: result.finish_reason,
                usage: result.usage,
                attempts: result.attempts,
            };
            let mut writer = audit.lock().unwrap();
            serde_json::to_writer(&mut *writer, &record)?;
            writer
                .write_all(b"\n")
                .and_then(|_| writer.flush())
                .map_err(|e| Error::Endpoint {
                    message: format!("audit log write failed: {e}"),
                })?;
        }
        Ok(())
    }

    /// Complete many prompts with at most `parallelism` requests in flight.
    /// Results come back in prompt order regardless of completion order.
    pub fn complete_batch(
        &self,
        stage: QueryStage,
        prompts: &[Prompt],
        params: &GenerationParams,
        parallelism: usize,
    ) -> std::result::Result<Vec<CompletionResult>, BatchError> {
        if parallelism == 0 {
            return Err(BatchError {
                failures: vec![(
                    0,
                    Error::InvalidParams {
                        message: "parallelism must be at least 1".into(),
                    },
                )],
                partial: vec![None; prompts.len()],
            });
        }
        let slots: Vec<Mutex<Option<Result<CompletionResult>>>> =
            prompts.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = parallelism.min(prompts.len().max(1));

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= prompts.len() {
                        break;
                    }
                    let outcome = self.complete(stage, &prompts[i], params);
                    *slots[i].lock().unwrap() = Some(outcome);
                });
            }
        });

        let mut failures = Vec::new();
        let mut partial = Vec::with_capacity(prompts.len());
        for (i, slot) in slots.into_iter().enumerate() {
            match slot.into_inner().unwrap() {
                Some(Ok(result)) => partial.push(Some(result)),
                Some(Err(err)) => {
                    failures.push((i, err));
                    partial.push(None);
                }
                None => {
                    failures.push((
                        i,
                        Error::Endpoint {
                            message: "worker never produced a result".into(),
                        },
                    ));
                    partial.push(None);
                }
            }
        }
        if failures.is_empty() {
            Ok(partial.into_iter().map(|r| r.unwrap()).collect())
        } else {
            Err(BatchError { failures, partial })
        }
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.call_log.lock().unwrap().clone()
    }

    pub fn usage_totals(&self) -> Vec<(QueryStage, Usage)> {
        self.totals
            .lock()
            .unwrap()
            .iter()
            .map(|(k, v)| (*k, *v))
            .collect()
    }
}

/// Cost estimate per stage and in total, at a flat token price.
#[derive(Clone, Debug, Serialize)]
pub struct CostLedger {
    pub per_stage: Vec<CostLine>,
    pub total_tokens: u64,
    pub total_cost: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CostLine {
    pub stage: QueryStage,
    pub tokens: u64,
    pub cost: f64,
}

/// tokens / 1000 × price, per stage plus a grand total.
pub fn estimate_cost(totals: &[(QueryStage, Usage)], price_per_1k_tokens: f64) -> Result<CostLedger> {
    if price_per_1k_tokens < 0.0 || price_per_1k_tokens.is_nan() {
        return Err(Error::InvalidParams {
            message: format!("price per 1k tokens must be non-negative, got {price_per_1k_tokens}"),
        });
    }
    let mut per_stage = Vec::new();
    let mut total_tokens = 0u64;
    for (stage, usage) in totals {
        let tokens = usage.total();
        total_tokens += tokens;
        per_stage.push(CostLine {
            stage: *stage,
            tokens,
            cost: tokens as f64 / 1000.0 * price_per_1k_tokens,
        });
    }
    Ok(CostLedger {
        per_stage,
        total_tokens,
        total_cost: total_tokens as f64 / 1000.0 * price_per_1k_tokens,
    })
}
