//! The iterative growth loop: sample demonstrations, prompt for new
//! instructions, admit survivors of the filter chain, then classify the
//! admitted tasks and generate instances for them.
//!
//! Randomness is derived per (seed, round, prompt) so a run interrupted at
//! any checkpoint resumes into exactly the bytes an uninterrupted run would
//! have produced. Admission within a round is strictly sequential in
//! (prompt index, item index) order: each admission immediately constrains
//! the next candidate's novelty check.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::export::{encode_example, EncodingTemplate};
use crate::filters::{
    run_instruction_filter_chain_indexed, FilterConfig, FilterVerdict, NoveltyIndex,
    RejectLogRecord,
};
use crate::gateway::{BatchError, Gateway, GenerationParams, QueryStage, StageParams};
use crate::model::io::{save_checkpoint, PipelineStage, PipelineState};
use crate::model::{Instance, Task, TaskOrigin, TaskPool, TaskType};
use crate::templates::{
    parse_clf_completion, parse_input_first_completion, parse_instruction_completion,
    parse_output_first_completion, Prompt, TemplateSet, DEMOS_PER_PROMPT,
};

fn default_demos_per_prompt() -> usize {
    DEMOS_PER_PROMPT
}

fn default_demos_from_seed() -> usize {
    6
}

fn default_demos_from_generated() -> usize {
    2
}

fn default_prompts_per_round() -> usize {
    4
}

fn default_rounds_cap() -> u32 {
    100
}

fn default_parallelism() -> usize {
    4
}

fn default_instance_rounds() -> usize {
    1
}

fn default_rng_seed() -> u64 {
    42
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Stop growing once this many generated tasks have been admitted.
    #[serde(default)]
    pub target_instruction_count: usize,
    #[serde(default = "default_demos_per_prompt")]
    pub demos_per_prompt: usize,
    #[serde(default = "default_demos_from_seed")]
    pub demos_from_seed: usize,
    #[serde(default = "default_demos_from_generated")]
    pub demos_from_generated: usize,
    #[serde(default = "default_prompts_per_round")]
    pub prompts_per_round: usize,
    /// Absolute cap on generation rounds; the pipeline proceeds to
    /// classification when it is reached, target met or not.
    #[serde(default = "default_rounds_cap")]
    pub rounds_cap: u32,
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_instance_rounds")]
    pub instance_rounds_per_task: usize,
    #[serde(default)]
    pub stage_params: StageParams,
    #[serde(default)]
    pub filter_config: FilterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.demos_from_seed + self.demos_from_generated != self.demos_per_prompt {
            return Err(Error::InvalidParams {
                message: format!(
                    "demos_from_seed ({}) + demos_from_generated ({}) must equal demos_per_prompt ({})",
                    self.demos_from_seed, self.demos_from_generated, self.demos_per_prompt
                ),
            });
        }
        if self.demos_per_prompt != DEMOS_PER_PROMPT {
            return Err(Error::InvalidParams {
                message: format!(
                    "the instruction prompt takes exactly {DEMOS_PER_PROMPT} demos, got {}",
                    self.demos_per_prompt
                ),
            });
        }
        if self.prompts_per_round == 0 || self.parallelism == 0 || self.instance_rounds_per_task == 0
        {
            return Err(Error::InvalidParams {
                message: "prompts_per_round, parallelism, and instance_rounds_per_task must be positive".into(),
            });
        }
        self.filter_config.validate()?;
        for stage in [
            QueryStage::InstructionGen,
            QueryStage::ClfIdentify,
            QueryStage::InstanceGen,
            QueryStage::Evaluate,
        ] {
            self.stage_params.for_stage(stage).validate()?;
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("config serializes")
                .as_bytes(),
        )
    }
}

/// splitmix64, used to derive independent per-(round, prompt) streams from
/// the base seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub fn demo_rng(base_seed: u64, round: u32, prompt_idx: u32) -> ChaCha8Rng {
    let derived = splitmix64(splitmix64(base_seed ^ ((round as u64) << 32)) ^ prompt_idx as u64);
    ChaCha8Rng::seed_from_u64(derived)
}

/// Draw the in-context demonstrations: `demos_from_seed` distinct seed
/// tasks plus `demos_from_generated` distinct generated tasks, shuffled
/// together. While fewer generated tasks exist than requested, the
/// shortfall is filled from additional distinct seeds.
pub fn sample_demos<'p, R: rand::Rng>(
    pool: &'p TaskPool,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<Vec<&'p Task>> {
    let seeds: Vec<&Task> = pool.seed_tasks().collect();
    let generated: Vec<&Task> = pool.generated_tasks().collect();
    let total = config.demos_per_prompt;
    if seeds.len() < total {
        return Err(Error::InvalidParams {
            message: format!(
                "demo sampling needs at least {total} seed tasks, pool has {}",
                seeds.len()
            ),
        });
    }
    let from_generated = config.demos_from_generated.min(generated.len());
    let from_seed = total - from_generated;

    let mut picked: Vec<&Task> = index::sample(rng, seeds.len(), from_seed)
        .iter()
        .map(|i| seeds[i])
        .collect();
    picked.extend(
        index::sample(rng, generated.len(), from_generated)
            .iter()
            .map(|i| generated[i]),
    );
    picked.shuffle(rng);
    Ok(picked)
}

/// Outcome counters for one generation round. Every parsed candidate is
/// either accepted or rejected, so `accepted + Σ rejected = parsed`.
#[derive(Clone, Debug, Default)]
pub struct RoundReport {
    pub round: u32,
    pub prompts_issued: usize,
    pub instructions_parsed: usize,
    pub accepted: usize,
    pub rejected_by_reason: BTreeMap<&'static str, usize>,
    pub tokens_used: u64,
    pub wall_time: Duration,
}

impl RoundReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected_by_reason.values().sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ClassifyReport {
    pub classified: usize,
    pub classification: usize,
    pub non_classification: usize,
    pub left_unknown: usize,
}

#[derive(Clone, Debug, Default)]
pub struct InstanceReport {
    pub tasks_processed: usize,
    pub instances_kept: usize,
    pub instances_filtered: usize,
}

#[derive(Clone, Debug, Default)]
pub struct RegenReport {
    pub rewritten: usize,
    pub kept_original: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub seed_digest: String,
    pub template_digests: BTreeMap<String, String>,
    pub rng_seed: u64,
    pub n_tasks: usize,
    pub n_seed_tasks: usize,
    pub n_generated_tasks: usize,
    pub n_instances: usize,
    pub cost: crate::gateway::CostLedger,
}

#[derive(Debug)]
pub enum RunOutcome {
    Completed(RunSummary),
    /// Stopped at a checkpoint by the per-invocation round budget.
    Paused { checkpoint: PathBuf, round: u32 },
}

#[derive(Debug, Default)]
pub struct RunSummary {
    pub rounds: Vec<RoundReport>,
    pub classify: ClassifyReport,
    pub instances: InstanceReport,
    pub generated_tasks: usize,
    pub pool_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Filesystem targets for a run.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub out: PathBuf,
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
}

impl RunPaths {
    pub fn for_out(out: &Path) -> Self {
        RunPaths {
            out: out.to_path_buf(),
            checkpoint: out.with_extension("checkpoint.jsonl"),
            manifest: out.with_extension("manifest.json"),
        }
    }
}

pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    templates: &'a TemplateSet,
    config: PipelineConfig,
    rejects_log: Option<Mutex<BufWriter<File>>>,
    /// Per-invocation budget of generation rounds before pausing; `None`
    /// runs to completion.
    pub stop_after_rounds: Option<u32>,
}

impl<'a> Pipeline<'a> {
    pub fn new(gateway: &'a Gateway, templates: &'a TemplateSet, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            gateway,
            templates,
            config,
            rejects_log: None,
            stop_after_rounds: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn with_rejects_log(mut self, path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        self.rejects_log = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    fn log_reject(&self, candidate: &str, verdict: &FilterVerdict) {
        let (Some(log), Some(reason)) = (&self.rejects_log, verdict.reason()) else {
            return;
        };
        let record = RejectLogRecord::new(candidate, reason);
        let mut writer = log.lock().unwrap();
        if serde_json::to_writer(&mut *writer, &record).is_ok() {
            let _ = writer.write_all(b"\n");
            let _ = writer.flush();
        }
    }

    /// One growth round: issue `prompts_per_round` instruction prompts with
    /// fresh demos, then admit parsed candidates sequentially through the
    /// filter chain. On a batch failure the candidates from completed
    /// prompts are still admitted before the error propagates, so the
    /// caller can checkpoint partial progress.
    pub fn generation_round(&self, pool: &mut TaskPool, round: u32) -> Result<RoundReport> {
        let started = Instant::now();
        let mut prompts = Vec::with_capacity(self.config.prompts_per_round);
        for prompt_idx in 0..self.config.prompts_per_round {
            let mut rng = demo_rng(self.config.rng_seed, round, prompt_idx as u32);
            let demos = sample_demos(pool, &self.config, &mut rng)?;
            let texts: Vec<&str> = demos.iter().map(|t| t.instruction.as_str()).collect();
            prompts.push(self.templates.render_instruction_prompt(&texts)?);
        }

        let params = &self.config.stage_params.instruction_gen;
        let (results, batch_failure): (Vec<Option<_>>, Option<BatchError>) = match self
            .gateway
            .complete_batch(QueryStage::InstructionGen, &prompts, params, self.config.parallelism)
        {
            Ok(results) => (results.into_iter().map(Some).collect(), None),
            Err(err) => {
                let partial = err.partial.clone();
                (partial, Some(err))
            }
        };

        let mut report = RoundReport {
            round,
            prompts_issued: prompts.len(),
            ..RoundReport::default()
        };
        let mut novelty = NoveltyIndex::from_pool(pool);
        let mut admitted_in_round = 0usize;

        for result in results.iter() {
            let Some(result) = result else { continue };
            report.tokens_used += result.usage.total();
            let parsed = parse_instruction_completion(
                &result.text,
                result.finish_reason.hit_length_limit(),
            );
            for candidate in &parsed.instructions {
                report.instructions_parsed += 1;
                let (verdict, score) =
                    run_instruction_filter_chain_indexed(candidate, &novelty, &self.config.filter_config);
                if verdict.accepted() {
                    let id = format!("gen_r{round}_{admitted_in_round}");
                    let mut task =
                        Task::new(&id, candidate.clone(), TaskType::Unknown, TaskOrigin::Generated { round });
                    task.admission_similarity = score.as_ref().map(|(s, _)| *s);
                    novelty.push(&id, candidate);
                    pool.add_task(task)?;
                    admitted_in_round += 1;
                    report.accepted += 1;
                } else {
                    self.log_reject(candidate, &verdict);
                    *report
                        .rejected_by_reason
                        .entry(verdict.reason().unwrap().code())
                        .or_insert(0) += 1;
                }
            }
        }
        report.wall_time = started.elapsed();

        match batch_failure {
            Some(err) => Err(err.to_error()),
            None => Ok(report),
        }
    }

    /// Classify every unknown-type task in pool order. Unparseable answers
    /// leave the task unknown (counted, not retried).
    pub fn classify_tasks(&self, pool: &mut TaskPool) -> Result<ClassifyReport> {
        let pending: Vec<String> = pool
            .tasks()
            .iter()
            .filter(|t| t.task_type == TaskType::Unknown)
            .map(|t| t.id.clone())
            .collect();
        self.classify_pending(pool, &pending).map(|(report, _)| report)
    }

    /// Classify the given ids; returns the report and, on batch failure,
    /// leaves unprocessed ids for the caller to checkpoint.
    fn classify_pending(
        &self,
        pool: &mut TaskPool,
        pending: &[String],
    ) -> Result<(ClassifyReport, Vec<String>)> {
        let mut report = ClassifyReport::default();
        if pending.is_empty() {
            return Ok((report, Vec::new()));
        }
        let mut prompts = Vec::with_capacity(pending.len());
        for id in pending {
            let task = pool.get(id).ok_or_else(|| Error::TaskNotFound { id: id.clone() })?;
            prompts.push(self.templates.render_clf_prompt(&task.instruction)?);
        }
        let params = &self.config.stage_params.clf_identify;
        let (results, batch_failure) = match self.gateway.complete_batch(
            QueryStage::ClfIdentify,
            &prompts,
            params,
            self.config.parallelism,
        ) {
            Ok(results) => (results.into_iter().map(Some).collect::<Vec<_>>(), None),
            Err(err) => {
                let partial = err.partial.clone();
                (partial, Some(err))
            }
        };

        let mut unfinished = Vec::new();
        for (id, result) in pending.iter().zip(results.iter()) {
            match result {
                Some(result) => {
                    let task_type = parse_clf_completion(&result.text);
                    if task_type == TaskType::Unknown {
                        report.left_unknown += 1;
                    } else {
                        if task_type == TaskType::Classification {
                            report.classification += 1;
                        } else {
                            report.non_classification += 1;
                        }
                        report.classified += 1;
                        pool.set_task_type(id, task_type)?;
                    }
                }
                None => unfinished.push(id.clone()),
            }
        }
        match batch_failure {
            Some(err) => {
                // caller checkpoints `unfinished` before surfacing this
                let _ = &unfinished;
                Err(err.to_error())
            }
            None => Ok((report, unfinished)),
        }
    }

    /// Generate, filter, and return instances for a single classified task.
    pub fn generate_instances(&self, task: &Task) -> Result<Vec<Instance>> {
        if task.task_type == TaskType::Unknown {
            return Err(Error::UnknownTaskType {
                id: task.id.clone(),
            });
        }
        let prompt = self.instance_prompt(task)?;
        let params = &self.config.stage_params.instance_gen;
        let mut raw = Vec::new();
        for _ in 0..self.config.instance_rounds_per_task {
            let result = self.gateway.complete(QueryStage::InstanceGen, &prompt, params)?;
            raw.extend(self.parse_instances(task.task_type, &result.text, result.finish_reason.hit_length_limit()));
        }
        Ok(self.filter_instances(raw).0)
    }

    fn instance_prompt(&self, task: &Task) -> Result<Prompt> {
        match task.task_type {
            TaskType::Classification => self.templates.render_output_first_prompt(&task.instruction),
            _ => self.templates.render_input_first_prompt(&task.instruction),
        }
    }

    fn parse_instances(&self, task_type: TaskType, text: &str, truncated: bool) -> Vec<Instance> {
        match task_type {
            TaskType::Classification => parse_output_first_completion(text, truncated),
            _ => parse_input_first_completion(text, truncated),
        }
    }

    fn filter_instances(&self, raw: Vec<Instance>) -> (Vec<Instance>, usize) {
        let before = raw.len();
        let screened: Vec<Instance> = raw
            .into_iter()
            .filter(|inst| crate::filters::instance_heuristics(inst).accepted())
            .collect();
        let (kept, _verdicts) = crate::filters::instance_dedup(&screened);
        let filtered = before - kept.len();
        (kept, filtered)
    }

    /// Generate instances for every classified task that has none yet.
    pub fn instantiate_missing(&self, pool: &mut TaskPool) -> Result<InstanceReport> {
        let pending: Vec<String> = pool
            .tasks()
            .iter()
            .filter(|t| t.task_type != TaskType::Unknown && t.instances.is_empty())
            .map(|t| t.id.clone())
            .collect();
        self.instantiate_pending(pool, &pending).map(|(report, _)| report)
    }

    /// Instance generation across `pending` task ids, batched. Tasks whose
    /// prompts all completed get their surviving instances installed; ids
    /// hit by a batch failure come back for checkpointing.
    fn instantiate_pending(
        &self,
        pool: &mut TaskPool,
        pending: &[String],
    ) -> Result<(InstanceReport, Vec<String>)> {
        let mut report = InstanceReport::default();
        if pending.is_empty() {
            return Ok((report, Vec::new()));
        }
        let rounds = self.config.instance_rounds_per_task;
        let mut prompts = Vec::with_capacity(pending.len() * rounds);
        let mut kinds = Vec::with_capacity(pending.len());
        for id in pending {
            let task = pool.get(id).ok_or_else(|| Error::TaskNotFound { id: id.clone() })?;
            if task.task_type == TaskType::Unknown {
                return Err(Error::UnknownTaskType { id: id.clone() });
            }
            kinds.push(task.task_type);
            let prompt = self.instance_prompt(task)?;
            for _ in 0..rounds {
                prompts.push(prompt.clone());
            }
        }

        let params = &self.config.stage_params.instance_gen;
        let (results, batch_failure) = match self.gateway.complete_batch(
            QueryStage::InstanceGen,
            &prompts,
            params,
            self.config.parallelism,
        ) {
            Ok(results) => (results.into_iter().map(Some).collect::<Vec<_>>(), None),
            Err(err) => {
                let partial = err.partial.clone();
                (partial, Some(err))
            }
        };

        let mut unfinished = Vec::new();
        for (ti, id) in pending.iter().enumerate() {
            let slots = &results[ti * rounds..(ti + 1) * rounds];
            if slots.iter().any(|s| s.is_none()) {
                unfinished.push(id.clone());
                continue;
            }
            let mut raw = Vec::new();
            for result in slots.iter().flatten() {
                raw.extend(self.parse_instances(
                    kinds[ti],
                    &result.text,
                    result.finish_reason.hit_length_limit(),
                ));
            }
            let (kept, filtered) = self.filter_instances(raw);
            report.tasks_processed += 1;
            report.instances_kept += kept.len();
            report.instances_filtered += filtered;
            pool.set_instances(id, kept)?;
        }
        match batch_failure {
            Some(err) => {
                let _ = &unfinished;
                Err(err.to_error())
            }
            None => Ok((report, unfinished)),
        }
    }

    /// Rewrite the output of every instance via the gateway, prompting with
    /// the canonical task/input encoding. Inputs and instructions are
    /// untouched; failures keep the original output and are counted.
    pub fn regenerate_outputs(
        &self,
        pool: &mut TaskPool,
        params: &GenerationParams,
    ) -> Result<RegenReport> {
        let template = EncodingTemplate::canonical();
        let mut targets: Vec<(String, usize)> = Vec::new();
        let mut prompts = Vec::new();
        for task in pool.tasks() {
            for (idx, instance) in task.instances.iter().enumerate() {
                let example = encode_example(task, instance, &template)?;
                prompts.push(Prompt {
                    text: example.prompt,
                    kind: crate::templates::PromptKind::InputFirst,
                });
                targets.push((task.id.clone(), idx));
            }
        }
        let results = match self.gateway.complete_batch(
            QueryStage::Evaluate,
            &prompts,
            params,
            self.config.parallelism,
        ) {
            Ok(results) => results.into_iter().map(Some).collect::<Vec<_>>(),
            Err(err) => err.partial,
        };

        let mut report = RegenReport::default();
        for ((id, idx), result) in targets.into_iter().zip(results) {
            let new_output = result.map(|r| r.text.trim().to_string()).unwrap_or_default();
            if new_output.is_empty() {
                report.kept_original += 1;
            } else {
                pool.replace_instance_output(&id, idx, new_output)?;
                report.rewritten += 1;
            }
        }
        Ok(report)
    }

    /// Run the full pipeline from a seed file, checkpointing after every
    /// stage boundary (and after every round inside the growth stage).
    pub fn run(&self, seed_path: &Path, paths: &RunPaths) -> Result<RunOutcome> {
        let mut pool = crate::model::io::load_seed_tasks(seed_path)?;
        pool.set_rng_seed(self.config.rng_seed);
        let state = PipelineState::fresh(self.config.rng_seed);
        self.run_from(pool, state, paths)
    }

    /// Continue from a checkpoint written by an earlier invocation.
    pub fn resume(&self, checkpoint: &Path, paths: &RunPaths) -> Result<RunOutcome> {
        let (pool, state) = crate::model::io::load_checkpoint(checkpoint)?;
        if state.rng_seed != self.config.rng_seed {
            return Err(Error::InvalidParams {
                message: format!(
                    "checkpoint was produced with seed {}, current config says {}",
                    state.rng_seed, self.config.rng_seed
                ),
            });
        }
        self.run_from(pool, state, paths)
    }

    fn run_from(
        &self,
        mut pool: TaskPool,
        mut state: PipelineState,
        paths: &RunPaths,
    ) -> Result<RunOutcome> {
        let mut summary = RunSummary::default();
        let mut rounds_this_invocation = 0u32;

        if state.stage == PipelineStage::Generating {
            while pool.generated_count() < self.config.target_instruction_count
                && state.round < self.config.rounds_cap
            {
                if self
                    .stop_after_rounds
                    .is_some_and(|cap| rounds_this_invocation >= cap)
                {
                    save_checkpoint(&pool, &state, &paths.checkpoint)?;
                    return Ok(RunOutcome::Paused {
                        checkpoint: paths.checkpoint.clone(),
                        round: state.round,
                    });
                }
                let round = state.round;
                let outcome = self.generation_round(&mut pool, round);
                state.round = round + 1;
                save_checkpoint(&pool, &state, &paths.checkpoint)?;
                summary.rounds.push(outcome?);
                rounds_this_invocation += 1;
            }
            state.stage = PipelineStage::Classifying;
            state.pending = pool
                .tasks()
                .iter()
                .filter(|t| t.task_type == TaskType::Unknown)
                .map(|t| t.id.clone())
                .collect();
            save_checkpoint(&pool, &state, &paths.checkpoint)?;
        }

        if state.stage == PipelineStage::Classifying {
            let pending = state.pending.clone();
            match self.classify_pending(&mut pool, &pending) {
                Ok((report, unfinished)) => {
                    debug_assert!(unfinished.is_empty());
                    summary.classify = report;
                }
                Err(err) => {
                    // partial classifications are in the pool; keep only
                    // still-unknown ids pending
                    state.pending = pending
                        .into_iter()
                        .filter(|id| {
                            pool.get(id).is_some_and(|t| t.task_type == TaskType::Unknown)
                        })
                        .collect();
                    save_checkpoint(&pool, &state, &paths.checkpoint)?;
                    return Err(err);
                }
            }
            state.stage = PipelineStage::Instancing;
            state.pending = pool
                .generated_tasks()
                .filter(|t| t.task_type != TaskType::Unknown && t.instances.is_empty())
                .map(|t| t.id.clone())
                .collect();
            save_checkpoint(&pool, &state, &paths.checkpoint)?;
        }

        if state.stage == PipelineStage::Instancing {
            let pending = state.pending.clone();
            match self.instantiate_pending(&mut pool, &pending) {
                Ok((report, unfinished)) => {
                    debug_assert!(unfinished.is_empty());
                    summary.instances = report;
                }
                Err(err) => {
                    state.pending = pending
                        .into_iter()
                        .filter(|id| pool.get(id).is_some_and(|t| t.instances.is_empty()))
                        .collect();
                    save_checkpoint(&pool, &state, &paths.checkpoint)?;
                    return Err(err);
                }
            }
            state.stage = PipelineStage::Done;
            state.pending = Vec::new();
            save_checkpoint(&pool, &state, &paths.checkpoint)?;
        }

        save_checkpoint(&pool, &state, &paths.out)?;
        self.write_manifest(&pool, &paths.manifest)?;
        summary.generated_tasks = pool.generated_count();
        summary.pool_path = paths.out.clone();
        summary.manifest_path = paths.manifest.clone();
        Ok(RunOutcome::Completed(summary))
    }

    fn write_manifest(&self, pool: &TaskPool, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            config_digest: self.config.digest(),
            seed_digest: seed_content_digest(pool),
            template_digests: self
                .templates
                .digests()
                .into_iter()
                .map(|(kind, digest)| (format!("{kind:?}"), digest))
                .collect(),
            rng_seed: self.config.rng_seed,
            n_tasks: pool.len(),
            n_seed_tasks: pool.seed_tasks().count(),
            n_generated_tasks: pool.generated_count(),
            n_instances: pool.tasks().iter().map(|t| t.instances.len()).sum(),
            cost: crate::gateway::estimate_cost(&self.gateway.usage_totals(), 0.02)?,
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(())
    }
}

/// Digest over the seed tasks' instructions, stable across fresh and
/// resumed runs (the seed file itself is not available on resume).
fn seed_content_digest(pool: &TaskPool) -> String {
    let mut joined = String::new();
    for task in pool.seed_tasks() {
        joined.push_str(&task.id);
        joined.push('\x1f');
        joined.push_str(&task.instruction);
        joined.push('\n');
    }
    sha256_hex(joined.as_bytes())
}
