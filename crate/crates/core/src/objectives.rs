//! Sequence-level objectives over a reward-annotated candidate set.
//!
//! Each objective returns its loss together with λ_i = ∂L/∂s_i for every
//! candidate it touches. The model turns these into parameter gradients via
//! [`weighted_nll_backward`](crate::model::weighted_nll_backward).
//!
//! Notation: `Y*` is the reward argmax, `Y~` the reward argmin and `Ŷ'` the
//! model-score argmax among the candidates other than `Y*`. Reward ties are
//! broken by the higher model score, then the lexicographically smaller
//! token sequence.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::decoding::{Candidate, CandidateSet};
use crate::error::{Error, Result};
use crate::model::ScoreKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// One-step policy gradient with a mean-reward baseline.
    Pg,
    /// Expected cost `−R` under set-normalized probabilities.
    Risk,
    /// Negative log-likelihood of the reward argmax.
    Distill,
    MultiMargin,
    MaxMargin,
    ContrastiveMargin,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 6] = [
        ObjectiveKind::Pg,
        ObjectiveKind::Risk,
        ObjectiveKind::Distill,
        ObjectiveKind::MultiMargin,
        ObjectiveKind::MaxMargin,
        ObjectiveKind::ContrastiveMargin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Pg => "pg",
            ObjectiveKind::Risk => "risk",
            ObjectiveKind::Distill => "distill",
            ObjectiveKind::MultiMargin => "multi_margin",
            ObjectiveKind::MaxMargin => "max_margin",
            ObjectiveKind::ContrastiveMargin => "contrastive_margin",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("objective.kind", format!("unknown objective `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    /// Margin scale: `m = alpha · ΔR`.
    pub alpha: f64,
    /// Margin objectives compare length-normalized scores when set.
    pub length_norm_scores: bool,
    pub kind: ObjectiveKind,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            alpha: 0.3,
            length_norm_scores: true,
            kind: ObjectiveKind::ContrastiveMargin,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("objective.alpha", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// The score that λ weights apply to for this objective.
    pub fn score_kind(&self) -> ScoreKind {
        match self.kind {
            ObjectiveKind::Pg | ObjectiveKind::Risk | ObjectiveKind::Distill => ScoreKind::Total,
            _ => ScoreKind::from_length_norm(self.length_norm_scores),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOutput {
    pub loss: f64,
    /// `(candidate index, λ)` for every candidate with non-zero λ.
    pub weights: Vec<(usize, f64)>,
    pub active: bool,
    pub score: ScoreKind,
}

impl ObjectiveOutput {
    fn from_dense(loss: f64, lambdas: &[f64], score: ScoreKind) -> Self {
        let weights: Vec<(usize, f64)> = lambdas
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != 0.0)
            .map(|(i, &l)| (i, l))
            .collect();
        ObjectiveOutput {
            loss,
            active: !weights.is_empty(),
            weights,
            score,
        }
    }

    fn inactive(score: ScoreKind) -> Self {
        ObjectiveOutput {
            loss: 0.0,
            weights: Vec::new(),
            active: false,
            score,
        }
    }

    /// λ for every one of `n` candidates, zeros included.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(i, l) in &self.weights {
            v[i] += l;
        }
        v
    }
}

struct View<'a> {
    cands: &'a [Candidate],
    rewards: Vec<f64>,
    scores: Vec<f64>,
    rank_scores: Vec<f64>,
}

fn view<'a>(set: &'a CandidateSet, score: ScoreKind, rank: ScoreKind) -> Result<View<'a>> {
    if set.is_empty() {
        return Err(Error::input("objective needs a non-empty candidate set"));
    }
    let rewards = set
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.reward
                .filter(|r| r.is_finite())
                .ok_or_else(|| Error::input(format!("candidate {i} has no finite reward")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(View {
        cands: &set.candidates,
        rewards,
        scores: set.candidates.iter().map(|c| c.score.get(score)).collect(),
        rank_scores: set.candidates.iter().map(|c| c.score.get(rank)).collect(),
    })
}

impl View<'_> {
    // Ordering where Greater means "better by reward", ties by model score then tokens.
    fn reward_cmp(&self, i: usize, j: usize) -> Ordering {
        self.rewards[i]
            .total_cmp(&self.rewards[j])
            .then_with(|| self.rank_scores[i].total_cmp(&self.rank_scores[j]))
            .then_with(|| self.cands[j].tokens.cmp(&self.cands[i].tokens))
    }

    fn tie_key_cmp(&self, i: usize, j: usize) -> Ordering {
        self.rank_scores[i]
            .total_cmp(&self.rank_scores[j])
            .then_with(|| self.cands[j].tokens.cmp(&self.cands[i].tokens))
    }

    fn reward_argmax(&self) -> usize {
        (0..self.cands.len()).max_by(|&i, &j| self.reward_cmp(i, j)).unwrap()
    }

    fn reward_argmin(&self) -> usize {
        let lowest = self.rewards.iter().copied().fold(f64::INFINITY, f64::min);
        (0..self.cands.len())
            .filter(|&i| self.rewards[i] == lowest)
            .max_by(|&i, &j| self.tie_key_cmp(i, j))
            .unwrap()
    }

    fn score_argmax_except(&self, skip: usize) -> Option<usize> {
        (0..self.cands.len())
            .filter(|&i| i != skip)
            .max_by(|&i, &j| self.tie_key_cmp(i, j))
    }
}

/// Index of `Y*` (reward argmax with deterministic tie-breaking).
pub fn reward_argmax(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<usize> {
    let rank = ScoreKind::from_length_norm(cfg.length_norm_scores);
    Ok(view(set, rank, rank)?.reward_argmax())
}

/// Index of `Y~` (reward argmin with deterministic tie-breaking).
pub fn reward_argmin(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<usize> {
    let rank = ScoreKind::from_length_norm(cfg.length_norm_scores);
    Ok(view(set, rank, rank)?.reward_argmin())
}

/// `L = −(1/N) Σ (R_i − R̄)·s_i`.
pub fn pg_loss(set: &CandidateSet, _cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    let kind = ScoreKind::Total;
    let v = view(set, kind, kind)?;
    let n = v.rewards.len() as f64;
    // -(R_i - mean)/N written over pairwise differences so ties give exact zeros
    let lambdas: Vec<f64> = v
        .rewards
        .iter()
        .map(|ri| -v.rewards.iter().map(|rj| ri - rj).sum::<f64>() / (n * n))
        .collect();
    let loss = lambdas.iter().zip(&v.scores).map(|(l, s)| l * s).sum();
    Ok(ObjectiveOutput::from_dense(loss, &lambdas, kind))
}

/// `L = −Σ R_i·p̃_i` with `p̃ = softmax(total log-probs)` over the set.
pub fn risk_loss(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    let kind = ScoreKind::Total;
    let v = view(set, kind, ScoreKind::from_length_norm(cfg.length_norm_scores))?;
    let m = v.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let expected: f64 = probs.iter().zip(&v.rewards).map(|(p, r)| p * r).sum();
    let lambdas: Vec<f64> = probs
        .iter()
        .zip(&v.rewards)
        .map(|(p, ri)| p * probs.iter().zip(&v.rewards).map(|(pj, rj)| pj * (rj - ri)).sum::<f64>())
        .collect();
    Ok(ObjectiveOutput::from_dense(-expected, &lambdas, kind))
}

/// `L = −s(Y*)` on total log-probability.
pub fn distill_loss(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    let kind = ScoreKind::Total;
    let v = view(set, kind, ScoreKind::from_length_norm(cfg.length_norm_scores))?;
    let best = v.reward_argmax();
    Ok(ObjectiveOutput {
        loss: -v.scores[best],
        weights: vec![(best, -1.0)],
        active: true,
        score: kind,
    })
}

/// `L = Σ_{Y≠Y*} max(0, α(R* − R(Y)) − s* + s(Y))`.
pub fn multi_margin_loss(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    let kind = cfg.score_kind();
    let v = view(set, kind, kind)?;
    let best = v.reward_argmax();
    let mut lambdas = vec![0.0; v.scores.len()];
    let mut loss = 0.0;
    for i in 0..v.scores.len() {
        if i == best {
            continue;
        }
        let term = cfg.alpha * (v.rewards[best] - v.rewards[i]) - v.scores[best] + v.scores[i];
        if term > 0.0 {
            loss += term;
            lambdas[best] -= 1.0;
            lambdas[i] += 1.0;
        }
    }
    Ok(ObjectiveOutput::from_dense(loss, &lambdas, kind))
}

fn pair_hinge(v: &View<'_>, best: usize, other: usize, alpha: f64, kind: ScoreKind) -> ObjectiveOutput {
    let term = alpha * (v.rewards[best] - v.rewards[other]) - v.scores[best] + v.scores[other];
    if term > 0.0 {
        ObjectiveOutput {
            loss: term,
            weights: vec![(best, -1.0), (other, 1.0)],
            active: true,
            score: kind,
        }
    } else {
        ObjectiveOutput::inactive(kind)
    }
}

/// Hinge between `Y*` and the best-scoring competitor `Ŷ'`.
pub fn max_margin_loss(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    let kind = cfg.score_kind();
    let v = view(set, kind, kind)?;
    let best = v.reward_argmax();
    Ok(match v.score_argmax_except(best) {
        Some(rival) => pair_hinge(&v, best, rival, cfg.alpha, kind),
        None => ObjectiveOutput::inactive(kind),
    })
}

/// Hinge between the reward-best `Y*` and the reward-worst `Y~`.
pub fn contrastive_margin_loss(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    cfg.validate()?;
    let kind = cfg.score_kind();
    let v = view(set, kind, kind)?;
    let best = v.reward_argmax();
    let worst = v.reward_argmin();
    if best == worst || v.rewards[best] == v.rewards[worst] {
        return Ok(ObjectiveOutput::inactive(kind));
    }
    Ok(pair_hinge(&v, best, worst, cfg.alpha, kind))
}

/// Dispatches on `cfg.kind`.
pub fn compute_objective(set: &CandidateSet, cfg: &ObjectiveConfig) -> Result<ObjectiveOutput> {
    match cfg.kind {
        ObjectiveKind::Pg => pg_loss(set, cfg),
        ObjectiveKind::Risk => risk_loss(set, cfg),
        ObjectiveKind::Distill => distill_loss(set, cfg),
        ObjectiveKind::MultiMargin => multi_margin_loss(set, cfg),
        ObjectiveKind::MaxMargin => max_margin_loss(set, cfg),
        ObjectiveKind::ContrastiveMargin => contrastive_margin_loss(set, cfg),
    }
}
