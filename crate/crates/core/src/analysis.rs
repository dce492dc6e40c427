//! Dataset measurements: overlap distributions against a reference corpus,
//! length distributions, verb-noun diversity, and inter-rater agreement.
//!
//! The verb-noun extractor is a rule-based approximation of a constituency
//! parse: it fires only on instructions that open with a known imperative
//! verb, and it reports its own coverage so partial firing stays visible.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{word_count, TaskPool};
use crate::rouge::{self, TokenSeq};

/// Counts over `bin_edges.len() - 1` bins; `total` equals the measured
/// population so conservation is checkable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    /// Uniform bins over [lo, hi]; values at the upper edge land in the
    /// last bin.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && hi > lo);
        let width = (hi - lo) / bins as f64;
        let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        Histogram {
            bin_edges,
            counts: vec![0; bins],
            total: 0,
        }
    }

    /// Unit-width bins 0..=max, with one extra bin absorbing values >= max.
    pub fn integer_clipped(max: usize) -> Self {
        let bin_edges = (0..=max + 1).map(|i| i as f64).collect();
        Histogram {
            bin_edges,
            counts: vec![0; max + 1],
            total: 0,
        }
    }

    pub fn add(&mut self, value: f64) {
        let bins = self.counts.len();
        let lo = self.bin_edges[0];
        let hi = self.bin_edges[bins];
        let width = (hi - lo) / bins as f64;
        let idx = if value >= hi {
            bins - 1
        } else if value <= lo {
            0
        } else {
            (((value - lo) / width) as usize).min(bins - 1)
        };
        self.counts[idx] += 1;
        self.total += 1;
    }

    /// CSV rows `bin_lo,bin_hi,count` with a header, for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, count) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                count
            ));
        }
        out
    }
}

/// Per-candidate best match against a reference corpus, plus the score
/// histogram and mean.
#[derive(Clone, Debug, Serialize)]
pub struct OverlapReport {
    pub histogram: Histogram,
    /// (max score, index of the nearest reference), per candidate.
    pub per_candidate: Vec<(f64, usize)>,
    pub mean: f64,
}

/// For each candidate, its highest ROUGE-L against the references.
pub fn overlap_distribution<S: AsRef<str>>(
    candidates: &[S],
    references: &[S],
    bins: usize,
) -> Result<OverlapReport> {
    if references.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let ref_seqs: Vec<TokenSeq> = references.iter().map(|r| rouge::tokenize(r.as_ref())).collect();
    let mut histogram = Histogram::uniform(0.0, 1.0, bins);
    let mut per_candidate = Vec::with_capacity(candidates.len());
    let mut sum = 0.0;
    for candidate in candidates {
        let tokens = rouge::tokenize(candidate.as_ref());
        let (score, idx) = rouge::max_similarity(&tokens, &ref_seqs)?;
        histogram.add(score.value());
        per_candidate.push((score.value(), idx));
        sum += score.value();
    }
    let mean = if per_candidate.is_empty() {
        0.0
    } else {
        sum / per_candidate.len() as f64
    };
    Ok(OverlapReport {
        histogram,
        per_candidate,
        mean,
    })
}

const LENGTH_CLIP_WORDS: usize = 60;

#[derive(Clone, Debug, Serialize)]
pub struct LengthReport {
    pub instruction: Histogram,
    pub nonempty_input: Histogram,
    pub output: Histogram,
    pub mean_instruction_words: f64,
    pub mean_nonempty_input_words: f64,
    pub mean_output_words: f64,
}

/// Word-length histograms for instructions, non-empty inputs, and outputs.
/// Empty inputs are excluded from the input histogram entirely.
pub fn length_distributions(pool: &TaskPool) -> LengthReport {
    let mut instruction = Histogram::integer_clipped(LENGTH_CLIP_WORDS);
    let mut nonempty_input = Histogram::integer_clipped(LENGTH_CLIP_WORDS);
    let mut output = Histogram::integer_clipped(LENGTH_CLIP_WORDS);
    let (mut iw, mut xw, mut ow) = (0usize, 0usize, 0usize);
    let (mut xi, mut oi) = (0usize, 0usize);

    for task in pool.tasks() {
        let words = word_count(&task.instruction);
        instruction.add(words as f64);
        iw += words;
        for instance in &task.instances {
            let in_words = word_count(&instance.input);
            if in_words > 0 {
                nonempty_input.add(in_words as f64);
                xw += in_words;
                xi += 1;
            }
            let out_words = word_count(&instance.output);
            output.add(out_words as f64);
            ow += out_words;
            oi += 1;
        }
    }

    let mean = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    LengthReport {
        mean_instruction_words: mean(iw, pool.len()),
        mean_nonempty_input_words: mean(xw, xi),
        mean_output_words: mean(ow, oi),
        instruction,
        nonempty_input,
        output,
    }
}

/// A (root verb, first noun object) pair found in an instruction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerbNounPair {
    pub verb: String,
    pub noun: String,
}

/// Word lists driving the verb-noun extractor.
#[derive(Clone, Debug)]
pub struct Lexicon {
    verbs: Vec<String>,
    skip: Vec<String>,
}

const VERBS: &str = include_str!("../resources/analysis/imperative_verbs.txt");
const SKIP: &str = include_str!("../resources/analysis/noun_skip_words.txt");

static BUILTIN_LEXICON: OnceLock<Lexicon> = OnceLock::new();

fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

impl Lexicon {
    pub fn builtin() -> &'static Lexicon {
        BUILTIN_LEXICON.get_or_init(|| Lexicon {
            verbs: parse_word_list(VERBS),
            skip: parse_word_list(SKIP),
        })
    }

    pub fn from_files(verbs_path: &std::path::Path, skip_path: &std::path::Path) -> Result<Lexicon> {
        let verbs = std::fs::read_to_string(verbs_path).map_err(|e| Error::io(verbs_path, e))?;
        let skip = std::fs::read_to_string(skip_path).map_err(|e| Error::io(skip_path, e))?;
        Ok(Lexicon {
            verbs: parse_word_list(&verbs),
            skip: parse_word_list(&skip),
        })
    }
}

fn content_words(instruction: &str) -> Vec<String> {
    instruction
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Rule-based approximation of root-verb/direct-object extraction: if the
/// instruction opens with a known imperative verb, the first following word
/// not on the skip list is taken as its object. Instructions framed as
/// questions or opening with subordinate clauses yield nothing.
pub fn verb_noun_pairs(instruction: &str) -> Option<VerbNounPair> {
    verb_noun_pairs_with(instruction, Lexicon::builtin())
}

pub fn verb_noun_pairs_with(instruction: &str, lexicon: &Lexicon) -> Option<VerbNounPair> {
    let words = content_words(instruction);
    let verb = words.first()?;
    if !lexicon.verbs.iter().any(|v| v == verb) {
        return None;
    }
    let noun = words[1..]
        .iter()
        .find(|w| !lexicon.skip.iter().any(|s| s == *w))?;
    Some(VerbNounPair {
        verb: verb.clone(),
        noun: noun.clone(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VerbEntry {
    pub verb: String,
    pub count: u64,
    /// Top noun objects for this verb, by frequency then lexicographically.
    pub nouns: Vec<(String, u64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerbNounRanking {
    pub verbs: Vec<VerbEntry>,
    pub pairs_found: usize,
    pub instructions_total: usize,
    /// pairs_found / instructions_total.
    pub coverage: f64,
}

/// Rank the most common head verbs and their top noun objects. Ties break
/// lexicographically so the ranking is stable.
pub fn top_verb_noun(pool: &TaskPool, k_verbs: usize, k_nouns: usize) -> VerbNounRanking {
    top_verb_noun_with(pool, k_verbs, k_nouns, Lexicon::builtin())
}

pub fn top_verb_noun_with(
    pool: &TaskPool,
    k_verbs: usize,
    k_nouns: usize,
    lexicon: &Lexicon,
) -> VerbNounRanking {
    let mut by_verb: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut pairs_found = 0usize;
    for task in pool.tasks() {
        if let Some(pair) = verb_noun_pairs_with(&task.instruction, lexicon) {
            pairs_found += 1;
            *by_verb.entry(pair.verb).or_default().entry(pair.noun).or_insert(0) += 1;
        }
    }

    let mut verbs: Vec<VerbEntry> = by_verb
        .into_iter()
        .map(|(verb, nouns)| {
            let count = nouns.values().sum();
            let mut nouns: Vec<(String, u64)> = nouns.into_iter().collect();
            nouns.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            nouns.truncate(k_nouns);
            VerbEntry { verb, count, nouns }
        })
        .collect();
    verbs.sort_by(|a, b| b.count.cmp(&a.count).then(a.verb.cmp(&b.verb)));
    verbs.truncate(k_verbs);

    let instructions_total = pool.len();
    VerbNounRanking {
        verbs,
        pairs_found,
        instructions_total,
        coverage: if instructions_total == 0 {
            0.0
        } else {
            pairs_found as f64 / instructions_total as f64
        },
    }
}

/// Cohen's kappa over categorical labels: (p_o − p_e) / (1 − p_e) with
/// chance agreement from the marginal label frequencies. An optional
/// collapse map merges labels before counting. Degenerate perfect agreement
/// (both raters constant and equal, p_e = 1) is defined as 1.0.
pub fn cohen_kappa<S: AsRef<str>>(
    ratings_a: &[S],
    ratings_b: &[S],
    collapse: Option<&BTreeMap<String, String>>,
) -> Result<f64> {
    if ratings_a.len() != ratings_b.len() {
        return Err(Error::LengthMismatch {
            a: ratings_a.len(),
            b: ratings_b.len(),
        });
    }
    if ratings_a.is_empty() {
        return Err(Error::InvalidParams {
            message: "rating lists must be non-empty".into(),
        });
    }
    let map = |label: &str| -> String {
        match collapse.and_then(|m| m.get(label)) {
            Some(merged) => merged.clone(),
            None => label.to_string(),
        }
    };

    let n = ratings_a.len() as f64;
    let mut agree = 0.0;
    let mut marg_a: BTreeMap<String, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<String, f64> = BTreeMap::new();
    for (a, b) in ratings_a.iter().zip(ratings_b) {
        let (a, b) = (map(a.as_ref()), map(b.as_ref()));
        if a == b {
            agree += 1.0;
        }
        *marg_a.entry(a).or_insert(0.0) += 1.0;
        *marg_b.entry(b).or_insert(0.0) += 1.0;
    }
    let p_o = agree / n;
    let p_e: f64 = marg_a
        .iter()
        .map(|(label, ca)| ca / n * marg_b.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Average ranks with midrank ties.
fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of midranks. Returns `None` when a
/// list has zero variance (the coefficient is undefined there).
pub fn spearman_rho(ratings_a: &[f64], ratings_b: &[f64]) -> Result<Option<f64>> {
    if ratings_a.len() != ratings_b.len() {
        return Err(Error::LengthMismatch {
            a: ratings_a.len(),
            b: ratings_b.len(),
        });
    }
    if ratings_a.is_empty() {
        return Err(Error::InvalidParams {
            message: "rating lists must be non-empty".into(),
        });
    }
    let ra = midranks(ratings_a);
    let rb = midranks(ratings_b);
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (a, b) in ra.iter().zip(&rb) {
        cov += (a - mean_a) * (b - mean_b);
        var_a += (a - mean_a).powi(2);
        var_b += (b - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_a * var_b).sqrt()))
}

/// Map ordinal labels onto numeric ranks given an order like `A>B>C>D`
/// (highest first).
pub fn ordinal_values<S: AsRef<str>>(labels: &[S], order: &[String]) -> Result<Vec<f64>> {
    labels
        .iter()
        .map(|label| {
            order
                .iter()
                .position(|o| o == label.as_ref())
                .map(|pos| (order.len() - pos) as f64)
                .ok_or_else(|| Error::InvalidParams {
                    message: format!("label '{}' is not in the declared order", label.as_ref()),
                })
        })
        .collect()
}
