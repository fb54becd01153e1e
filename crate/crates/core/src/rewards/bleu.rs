use std::collections::HashMap;

use super::RewardFunction;
use crate::error::{Error, Result};
use crate::synthdata::Token;

pub const DEFAULT_MAX_N: usize = 4;

pub fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total hypothesis n-grams.
pub(crate) fn clipped_matches(hyp: &[Token], reference: &[Token], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

/// Sentence BLEU with add-one smoothing on the n ≥ 2 precisions.
///
/// `BP · exp(mean_n ln p_n)`, `BP = min(1, exp(1 − |ref|/|hyp|))`. The
/// unigram precision is unsmoothed, so a hypothesis sharing no token with the
/// reference scores 0, as does the empty hypothesis.
pub fn smoothed_bleu(hyp: &[Token], reference: &[Token], max_n: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::input("smoothed BLEU needs a non-empty reference"));
    }
    if max_n == 0 {
        return Err(Error::config("reward.max_n", "must be at least 1"));
    }
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, total) = clipped_matches(hyp, reference, n);
        let p = if n == 1 {
            m as f64 / total as f64
        } else {
            (m as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    Ok(bp * (log_sum / max_n as f64).exp())
}

#[derive(Debug, Clone)]
pub struct SmoothedBleu {
    pub max_n: usize,
}

impl SmoothedBleu {
    pub fn new(max_n: usize) -> Self {
        SmoothedBleu { max_n }
    }
}

impl Default for SmoothedBleu {
    fn default() -> Self {
        SmoothedBleu { max_n: DEFAULT_MAX_N }
    }
}

impl RewardFunction for SmoothedBleu {
    fn name(&self) -> &str {
        "sbleu"
    }

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64> {
        smoothed_bleu(hypothesis, reference, self.max_n)
    }
}
