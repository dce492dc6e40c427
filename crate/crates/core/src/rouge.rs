//! Tokenization, longest-common-subsequence, and ROUGE-L similarity.
//!
//! The variant implemented here is the F1 combination of LCS precision and
//! recall over lowercased whitespace tokens: no stemming, no stopword
//! removal. The novelty threshold applied elsewhere is configuration, so the
//! scorer itself stays parameter-free.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// A token sequence produced by [`tokenize`]. Tokens are lowercase and
/// contain no whitespace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Similarity scalar in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Lowercase and split on Unicode whitespace. Punctuation stays attached to
/// its token ("Poem." tokenizes to "poem.").
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq {
        tokens: text
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect(),
    }
}

/// Length of the longest common subsequence, by the usual rolling-row DP.
pub fn lcs_length(a: &TokenSeq, b: &TokenSeq) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for lt in &long.tokens {
        for (j, st) in short.tokens.iter().enumerate() {
            cur[j + 1] = if lt == st {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// ROUGE-L F1: with `L = lcs_length`, precision `L/|candidate|` and recall
/// `L/|reference|` combine as `2PR/(P+R)`; 0 when either side is empty or
/// there is no common subsequence.
pub fn rouge_l(candidate: &TokenSeq, reference: &TokenSeq) -> SimilarityScore {
    if candidate.is_empty() || reference.is_empty() {
        return SimilarityScore(0.0);
    }
    let lcs = lcs_length(candidate, reference) as f64;
    if lcs == 0.0 {
        return SimilarityScore(0.0);
    }
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    SimilarityScore(2.0 * precision * recall / (precision + recall))
}

/// Maximum ROUGE-L over a corpus and the smallest index attaining it.
///
/// References sharing no token with the candidate provably score 0, so the
/// scan skips the DP for them; results are identical to the naive scan.
pub fn max_similarity(candidate: &TokenSeq, corpus: &[TokenSeq]) -> Result<(SimilarityScore, usize)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab: HashSet<&str> = candidate.tokens.iter().map(String::as_str).collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0usize;
    for (i, reference) in corpus.iter().enumerate() {
        let overlaps = reference.tokens.iter().any(|t| vocab.contains(t.as_str()));
        let score = if overlaps {
            rouge_l(candidate, reference).value()
        } else {
            0.0
        };
        if score > best {
            best = score;
            best_idx = i;
        }
    }
    Ok((SimilarityScore(best), best_idx))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent reference implementations used only to cross-check the
    //! production code. Deliberately naive.

    use super::TokenSeq;

    /// Textbook recursive LCS, no memoization.
    pub fn lcs_recursive(a: &[String], b: &[String]) -> usize {
        if a.is_empty() || b.is_empty() {
            0
        } else if a[a.len() - 1] == b[b.len() - 1] {
            1 + lcs_recursive(&a[..a.len() - 1], &b[..b.len() - 1])
        } else {
            lcs_recursive(&a[..a.len() - 1], b).max(lcs_recursive(a, &b[..b.len() - 1]))
        }
    }

    /// LCS by exhaustive enumeration of every subsequence of the shorter
    /// sequence, testing each against the longer one.
    pub fn lcs_enumerate(a: &TokenSeq, b: &TokenSeq) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        assert!(short.len() <= 16, "enumeration oracle is exponential");
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let sub: Vec<&String> = short
                .tokens()
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, t)| t)
                .collect();
            if sub.len() > best && is_subsequence(&sub, long.tokens()) {
                best = sub.len();
            }
        }
        best
    }

    fn is_subsequence(needle: &[&String], haystack: &[String]) -> bool {
        let mut it = haystack.iter();
        needle.iter().all(|n| it.any(|h| h == *n))
    }

    pub fn f1_from_lcs(lcs: usize, cand_len: usize, ref_len: usize) -> f64 {
        if cand_len == 0 || ref_len == 0 || lcs == 0 {
            return 0.0;
        }
        let p = lcs as f64 / cand_len as f64;
        let r = lcs as f64 / ref_len as f64;
        2.0 * p * r / (p + r)
    }
}
