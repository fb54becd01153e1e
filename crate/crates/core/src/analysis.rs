//! Metric agreement, reward histograms and divergence mining.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::decoding::{beam_search_weights, BeamConfig, Candidate, CandidateSet};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Weights};
use crate::par;
use crate::rewards::{smoothed_bleu, RewardFunction, DEFAULT_MAX_N};
use crate::seed;
use crate::synthdata::{format_tokens, SequencePair, Token};
use crate::trainer::sample_with_fallback;

fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).expect("NaN filtered before sorting")
}

fn tied_pairs<T, F: Fn(&T, &T) -> bool>(sorted: &[T], same: F) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if same(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

// merge sort on `ys`, returning the number of strict inversions
fn count_swaps(ys: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_swaps(&mut ys[..mid], &mut buf[..mid]) + count_swaps(&mut ys[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if ys[j] < ys[i] {
            buf[k] = ys[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = ys[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&ys[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&ys[j..n]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's τ-b in O(n log n).
///
/// Returns `Ok(None)` when either list is entirely tied, where τ-b is undefined.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::input(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::input("Kendall's tau needs at least two observations"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::input("Kendall's tau input contains NaN"));
    }
    let n = xs.len() as u64;
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp_f64(&a.0, &b.0).then_with(|| cmp_f64(&a.1, &b.1)));
    let n0 = n * (n - 1) / 2;
    let n1 = tied_pairs(&pairs, |a, b| a.0 == b.0);
    let n3 = tied_pairs(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let mut y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; y.len()];
    let swaps = count_swaps(&mut y, &mut buf);
    let n2 = tied_pairs(&y, |a, b| a == b);
    let (dx, dy) = (n0 - n1, n0 - n2);
    if dx == 0 || dy == 0 {
        return Ok(None);
    }
    let num = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(Some(num as f64 / ((dx as f64) * (dy as f64)).sqrt()))
}

/// Where an analysis metric reads its value from.
#[derive(Clone)]
pub enum MetricSource {
    /// The candidate's ranking score (length-normalized when the set is).
    ModelScore,
    Reward(Arc<dyn RewardFunction>),
}

#[derive(Clone)]
pub struct NamedMetric {
    pub name: String,
    pub source: MetricSource,
}

impl NamedMetric {
    pub fn model_score() -> Self {
        NamedMetric {
            name: "model".into(),
            source: MetricSource::ModelScore,
        }
    }

    pub fn reward(r: Arc<dyn RewardFunction>) -> Self {
        NamedMetric {
            name: r.name().to_string(),
            source: MetricSource::Reward(r),
        }
    }

    fn value(&self, set: &CandidateSet, c: &Candidate, reference: &[Token]) -> Result<f64> {
        match &self.source {
            MetricSource::ModelScore => Ok(set.ranking_score(c)),
            MetricSource::Reward(r) => r.evaluate(&c.tokens, reference),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationConfig {
    pub k: usize,
    pub samples: usize,
    pub seed: u64,
    pub length_norm: bool,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            k: 4,
            samples: 10_000,
            seed: 1,
            length_norm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Mean per-sentence τ-b; NaN when no sample was defined for the pair.
    pub values: Vec<Vec<f64>>,
    /// Number of samples where τ-b was defined, per pair.
    pub defined: Vec<Vec<usize>>,
    pub samples: usize,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (n, row) in self.names.iter().zip(&self.values) {
            s.push_str(n);
            for v in row {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Mean Kendall τ-b between every pair of metrics over k-best lists of
/// randomly sampled sentences.
pub fn correlation_matrix(
    params: &ModelParams,
    pairs: &[SequencePair],
    metrics: &[NamedMetric],
    cfg: &CorrelationConfig,
) -> Result<CorrelationMatrix> {
    if metrics.len() < 2 {
        return Err(Error::config("analysis.metrics", "need at least two metrics"));
    }
    if cfg.k < 2 {
        return Err(Error::config("analysis.k", "k-best lists need k >= 2"));
    }
    if cfg.samples == 0 {
        return Err(Error::config("analysis.samples", "must be positive"));
    }
    if pairs.is_empty() {
        return Err(Error::input("no sentences to sample"));
    }
    let mut rng = seed::rng(cfg.seed, "correlate");
    let picks = sample_with_fallback(&mut rng, pairs.len(), cfg.samples);

    // decode each distinct sentence once
    let unique: Vec<usize> = picks
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let w = Weights::from_params(params);
    let beam = BeamConfig::new(cfg.k, cfg.k, cfg.length_norm);
    let m = metrics.len();
    let per_sentence: Vec<Result<Vec<Option<f64>>>> = par::map(&unique, |&i| {
        let pair = &pairs[i];
        let set = beam_search_weights(&w, &pair.source, &beam)?;
        let values = metrics
            .iter()
            .map(|metric| {
                set.candidates
                    .iter()
                    .map(|c| metric.value(&set, c, &pair.reference))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut taus = Vec::with_capacity(m * m);
        for a in 0..m {
            for b in 0..m {
                taus.push(if set.len() < 2 {
                    None
                } else {
                    kendall_tau(&values[a], &values[b])?
                });
            }
        }
        Ok(taus)
    });
    let mut table: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (i, r) in unique.iter().zip(per_sentence) {
        table.insert(*i, r?);
    }

    let mut sums = vec![vec![0.0; m]; m];
    let mut defined = vec![vec![0usize; m]; m];
    for i in &picks {
        for (cell, tau) in table[i].iter().enumerate() {
            if let Some(t) = tau {
                sums[cell / m][cell % m] += t;
                defined[cell / m][cell % m] += 1;
            }
        }
    }
    let values = sums
        .iter()
        .zip(&defined)
        .map(|(row, d)| {
            row.iter()
                .zip(d)
                .map(|(s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
                .collect()
        })
        .collect();
    Ok(CorrelationMatrix {
        names: metrics.iter().map(|m| m.name.clone()).collect(),
        values,
        defined,
        samples: picks.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceThresholds {
    /// Minimum increase of the learned metric.
    pub metric_up: f64,
    /// Minimum decrease of smoothed BLEU, on the [0, 1] scale.
    pub sbleu_down: f64,
}

impl Default for DivergenceThresholds {
    fn default() -> Self {
        DivergenceThresholds {
            metric_up: 0.3,
            sbleu_down: 0.03,
        }
    }
}

impl DivergenceThresholds {
    pub fn accepts(&self, delta_metric: f64, delta_sbleu: f64) -> bool {
        delta_metric >= self.metric_up && delta_sbleu <= -self.sbleu_down
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceRecord {
    pub id: usize,
    pub baseline: Vec<Token>,
    pub tuned: Vec<Token>,
    pub delta_metric: f64,
    pub delta_sbleu: f64,
}

/// Sentences where the tuned system gains on the metric while losing smoothed BLEU,
/// sorted by metric gain (descending).
pub fn mine_divergence(
    baseline: &[Vec<Token>],
    tuned: &[Vec<Token>],
    references: &[Vec<Token>],
    metric: &dyn RewardFunction,
    thresholds: &DivergenceThresholds,
) -> Result<Vec<DivergenceRecord>> {
    if baseline.len() != tuned.len() || baseline.len() != references.len() {
        return Err(Error::input(format!(
            "misaligned inputs: {} baseline, {} tuned, {} reference lines",
            baseline.len(),
            tuned.len(),
            references.len()
        )));
    }
    let mut out = Vec::new();
    for (id, ((b, t), r)) in baseline.iter().zip(tuned).zip(references).enumerate() {
        let delta_metric = metric.evaluate(t, r)? - metric.evaluate(b, r)?;
        let delta_sbleu = smoothed_bleu(t, r, DEFAULT_MAX_N)? - smoothed_bleu(b, r, DEFAULT_MAX_N)?;
        if thresholds.accepts(delta_metric, delta_sbleu) {
            out.push(DivergenceRecord {
                id,
                baseline: b.clone(),
                tuned: t.clone(),
                delta_metric,
                delta_sbleu,
            });
        }
    }
    out.sort_by(|a, b| b.delta_metric.total_cmp(&a.delta_metric).then(a.id.cmp(&b.id)));
    Ok(out)
}

pub fn divergence_tsv(records: &[DivergenceRecord]) -> String {
    let mut s = String::from("id\tdelta_metric\tdelta_sbleu\tbaseline_hyp\ttuned_hyp\n");
    for r in records {
        s.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{}\t{}\n",
            r.id,
            r.delta_metric,
            r.delta_sbleu,
            format_tokens(&r.baseline),
            format_tokens(&r.tuned)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::SmoothedBleu;

    #[test]
    fn tau_extremes() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), Some(1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), None);
    }

    #[test]
    fn tau_with_ties() {
        // P=4, Q=0, one pair tied only in x, one only in y: 4 / sqrt(5·5)
        let t = kendall_tau(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 3.0])
            .unwrap()
            .unwrap();
        assert_eq!(t, 0.8);
    }

    #[test]
    fn tau_errors() {
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn divergence_edge_cases() {
        let refs = vec![vec![4, 5, 6, 7]];
        let hyps = vec![vec![4, 5, 6, 8]];
        let m = SmoothedBleu::default();
        let th = DivergenceThresholds::default();
        assert!(mine_divergence(&hyps, &hyps, &refs, &m, &th).unwrap().is_empty());
        let inf = DivergenceThresholds {
            metric_up: f64::INFINITY,
            sbleu_down: f64::INFINITY,
        };
        assert!(mine_divergence(&hyps, &refs, &refs, &m, &inf).unwrap().is_empty());
        assert!(mine_divergence(&hyps, &[], &refs, &m, &th).is_err());
    }
}
