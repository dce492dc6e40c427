//! The admission filter chain for candidate instructions and the hygiene
//! filters for generated instances.
//!
//! Every filter is pure: given the same candidate, pool snapshot, and
//! config, the verdict is identical. Admission (which changes the snapshot)
//! is serialized by the orchestrator.

use serde::{Deserialize, Serialize};

use crate::model::{word_count, Instance, TaskPool};
use crate::rouge::{self, TokenSeq};

/// Why a candidate or instance was rejected.
#[derive(Clone, Debug, PartialEq)]
pub enum RejectReason {
    TooSimilar { score: f64, nearest_id: String },
    BlacklistedKeyword { word: String },
    TooShort,
    TooLong,
    DuplicateInstance,
    ConflictingInstances,
    OutputRepeatsInput,
    EmptyOutput,
    Unparseable,
}

impl RejectReason {
    /// Stable snake_case code for logs and reports.
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::TooSimilar { .. } => "too_similar",
            RejectReason::BlacklistedKeyword { .. } => "blacklisted_keyword",
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::DuplicateInstance => "duplicate_instance",
            RejectReason::ConflictingInstances => "conflicting_instances",
            RejectReason::OutputRepeatsInput => "output_repeats_input",
            RejectReason::EmptyOutput => "empty_output",
            RejectReason::Unparseable => "unparseable",
        }
    }
}

/// Accept, or reject with a machine-readable reason.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterVerdict {
    Ok,
    Reject(RejectReason),
}

impl FilterVerdict {
    pub fn accepted(&self) -> bool {
        matches!(self, FilterVerdict::Ok)
    }

    pub fn reason(&self) -> Option<&RejectReason> {
        match self {
            FilterVerdict::Ok => None,
            FilterVerdict::Reject(reason) => Some(reason),
        }
    }
}

/// One line of the rejects log.
#[derive(Debug, Serialize)]
pub struct RejectLogRecord<'a> {
    pub candidate: &'a str,
    pub reason: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest_id: Option<&'a str>,
}

impl<'a> RejectLogRecord<'a> {
    pub fn new(candidate: &'a str, reason: &'a RejectReason) -> Self {
        let (score, nearest_id) = match reason {
            RejectReason::TooSimilar { score, nearest_id } => {
                (Some(*score), Some(nearest_id.as_str()))
            }
            _ => (None, None),
        };
        RejectLogRecord {
            candidate,
            reason: reason.code(),
            score,
            nearest_id,
        }
    }
}

fn default_novelty_threshold() -> f64 {
    0.7
}

fn default_min_words() -> usize {
    3
}

fn default_max_words() -> usize {
    150
}

fn default_blacklist() -> Vec<String> {
    [
        "image", "images", "picture", "pictures", "graph", "graphs", "file", "files", "map",
        "maps", "draw", "plot", "chart", "go to", "video", "audio", "music", "flowchart",
        "diagram",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Candidates scoring at or above this against the pool are rejected.
    #[serde(default = "default_novelty_threshold")]
    pub novelty_threshold: f64,
    /// Lowercase words and phrases matched whole-word, case-insensitively.
    #[serde(default = "default_blacklist")]
    pub keyword_blacklist: Vec<String>,
    #[serde(default = "default_min_words")]
    pub min_instruction_words: usize,
    #[serde(default = "default_max_words")]
    pub max_instruction_words: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            novelty_threshold: default_novelty_threshold(),
            keyword_blacklist: default_blacklist(),
            min_instruction_words: default_min_words(),
            max_instruction_words: default_max_words(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.novelty_threshold > 0.0 && self.novelty_threshold <= 1.0) {
            return Err(crate::error::Error::InvalidParams {
                message: format!(
                    "novelty_threshold must be in (0, 1], got {}",
                    self.novelty_threshold
                ),
            });
        }
        if self.min_instruction_words >= self.max_instruction_words {
            return Err(crate::error::Error::InvalidParams {
                message: format!(
                    "min_instruction_words ({}) must be below max_instruction_words ({})",
                    self.min_instruction_words, self.max_instruction_words
                ),
            });
        }
        Ok(())
    }
}

/// Tokenized view of the pool's instructions, kept in admission order so the
/// orchestrator can extend it incrementally instead of re-tokenizing the
/// pool per candidate.
#[derive(Clone, Debug, Default)]
pub struct NoveltyIndex {
    ids: Vec<String>,
    seqs: Vec<TokenSeq>,
}

impl NoveltyIndex {
    pub fn from_pool(pool: &TaskPool) -> Self {
        let mut index = NoveltyIndex::default();
        for task in pool.tasks() {
            index.push(&task.id, &task.instruction);
        }
        index
    }

    pub fn push(&mut self, id: &str, instruction: &str) {
        self.ids.push(id.to_string());
        self.seqs.push(rouge::tokenize(instruction));
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    /// Max ROUGE-L of `candidate` against the indexed instructions.
    pub fn max_similarity(&self, candidate: &TokenSeq) -> Option<(f64, &str)> {
        let (score, idx) = rouge::max_similarity(candidate, &self.seqs).ok()?;
        Some((score.value(), self.ids[idx].as_str()))
    }
}

/// Reject candidates whose max ROUGE-L against the pool reaches the
/// threshold; acceptance requires strictly-below.
pub fn novelty_filter(candidate: &str, pool: &TaskPool, config: &FilterConfig) -> FilterVerdict {
    novelty_filter_indexed(candidate, &NoveltyIndex::from_pool(pool), config).0
}

/// Same as [`novelty_filter`], against a prebuilt index; also returns the
/// score and nearest id so admission can record them.
pub fn novelty_filter_indexed(
    candidate: &str,
    index: &NoveltyIndex,
    config: &FilterConfig,
) -> (FilterVerdict, Option<(f64, String)>) {
    let tokens = rouge::tokenize(candidate);
    match index.max_similarity(&tokens) {
        Some((score, nearest_id)) => {
            let verdict = if score < config.novelty_threshold {
                FilterVerdict::Ok
            } else {
                FilterVerdict::Reject(RejectReason::TooSimilar {
                    score,
                    nearest_id: nearest_id.to_string(),
                })
            };
            (verdict, Some((score, nearest_id.to_string())))
        }
        None => (FilterVerdict::Ok, None),
    }
}

fn keyword_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Reject instructions containing a blacklisted word or phrase as whole
/// words; "Imagine" does not match "image".
pub fn keyword_filter(candidate: &str, config: &FilterConfig) -> FilterVerdict {
    let words = keyword_words(candidate);
    for entry in &config.keyword_blacklist {
        let needle = keyword_words(entry);
        if needle.is_empty() || needle.len() > words.len() {
            continue;
        }
        if words.windows(needle.len()).any(|w| w == needle.as_slice()) {
            return FilterVerdict::Reject(RejectReason::BlacklistedKeyword {
                word: entry.clone(),
            });
        }
    }
    FilterVerdict::Ok
}

/// Word-count bounds, inclusive on both ends.
pub fn length_filter(candidate: &str, config: &FilterConfig) -> FilterVerdict {
    let words = word_count(candidate);
    if words < config.min_instruction_words {
        FilterVerdict::Reject(RejectReason::TooShort)
    } else if words > config.max_instruction_words {
        FilterVerdict::Reject(RejectReason::TooLong)
    } else {
        FilterVerdict::Ok
    }
}

/// Per-instance hygiene: an output that trims to nothing, or merely repeats
/// the input, is rejected.
pub fn instance_heuristics(instance: &Instance) -> FilterVerdict {
    let output = instance.output.trim();
    if output.is_empty() {
        return FilterVerdict::Reject(RejectReason::EmptyOutput);
    }
    let input = instance.input.trim();
    if !input.is_empty() && output.eq_ignore_ascii_case(input) {
        return FilterVerdict::Reject(RejectReason::OutputRepeatsInput);
    }
    FilterVerdict::Ok
}

/// Collapse exact (input, output) duplicates to their first occurrence and
/// drop every member of any input group holding two or more distinct
/// outputs. Survivor order is a subsequence of the original order.
pub fn instance_dedup(instances: &[Instance]) -> (Vec<Instance>, Vec<FilterVerdict>) {
    use std::collections::HashMap;

    let mut distinct_outputs: HashMap<&str, Vec<&str>> = HashMap::new();
    for instance in instances {
        let outputs = distinct_outputs.entry(instance.input.as_str()).or_default();
        if !outputs.contains(&instance.output.as_str()) {
            outputs.push(instance.output.as_str());
        }
    }

    let mut kept = Vec::new();
    let mut verdicts = Vec::with_capacity(instances.len());
    let mut seen_pairs: Vec<(&str, &str)> = Vec::new();

    for instance in instances {
        if distinct_outputs[instance.input.as_str()].len() >= 2 {
            verdicts.push(FilterVerdict::Reject(RejectReason::ConflictingInstances));
            continue;
        }
        let pair = (instance.input.as_str(), instance.output.as_str());
        if seen_pairs.contains(&pair) {
            verdicts.push(FilterVerdict::Reject(RejectReason::DuplicateInstance));
            continue;
        }
        seen_pairs.push(pair);
        kept.push(instance.clone());
        verdicts.push(FilterVerdict::Ok);
    }
    (kept, verdicts)
}

/// The instruction admission chain, in fixed order: parse sanity, length,
/// keywords, novelty. Returns the first rejection.
pub fn run_instruction_filter_chain(
    candidate: &str,
    pool: &TaskPool,
    config: &FilterConfig,
) -> FilterVerdict {
    run_instruction_filter_chain_indexed(candidate, &NoveltyIndex::from_pool(pool), config).0
}

/// Chain variant over a prebuilt index, returning the novelty score when the
/// scan ran (the score is recorded on admitted tasks for auditing).
pub fn run_instruction_filter_chain_indexed(
    candidate: &str,
    index: &NoveltyIndex,
    config: &FilterConfig,
) -> (FilterVerdict, Option<(f64, String)>) {
    if candidate.trim().is_empty() {
        return (FilterVerdict::Reject(RejectReason::Unparseable), None);
    }
    let verdict = length_filter(candidate, config);
    if !verdict.accepted() {
        return (verdict, None);
    }
    let verdict = keyword_filter(candidate, config);
    if !verdict.accepted() {
        return (verdict, None);
    }
    novelty_filter_indexed(candidate, index, config)
}
