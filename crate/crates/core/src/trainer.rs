//! NLL pretraining, reward fine-tuning and evaluation.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::{beam_search_weights, BeamConfig, CandidateSet};
use crate::error::{Error, Result};
use crate::model::{
    average_checkpoints, init_params, sgd_step, weighted_backward_weights, ModelParams, ScoreKind, WeightedItem,
    Weights,
};
use crate::objectives::{compute_objective, ObjectiveConfig};
use crate::par;
use crate::rewards::{token_edit_distance, RewardFunction};
use crate::seed;
use crate::synthdata::{SequencePair, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub iters: usize,
    pub lr: f64,
    pub batch_sentences: usize,
    /// Gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Learning rate at the last iteration, reached by linear decay from `lr`.
    pub lr_final: f64,
    pub ckpt_every: usize,
    pub average_last: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            iters: 3000,
            lr: 1.0,
            batch_sentences: 32,
            clip_norm: Some(1.0),
            lr_final: 0.01,
            ckpt_every: 100,
            average_last: 10,
            embed_dim: 32,
            hidden_dim: 32,
            seed: 1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("train.pretrain_lr", "must be positive"));
        }
        if !(self.lr_final > 0.0) || self.lr_final > self.lr {
            return Err(Error::config(
                "train.pretrain_lr_final",
                "must lie in (0, train.pretrain_lr]",
            ));
        }
        if self.batch_sentences == 0 {
            return Err(Error::config("train.pretrain_batch", "must be positive"));
        }
        if self.ckpt_every == 0 {
            return Err(Error::config("train.ckpt_every", "must be positive"));
        }
        if self.average_last == 0 {
            return Err(Error::config("train.average_last", "must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("train.clip_norm", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Average of the last `average_last` checkpoints.
    pub params: ModelParams,
    /// `(iteration, params)` at every checkpoint, in order.
    pub checkpoints: Vec<(usize, ModelParams)>,
    /// Mean training loss per logged checkpoint, aligned with `checkpoints`.
    pub losses: Vec<f64>,
}

/// Mean per-sentence negative log-likelihood (EOS included).
pub fn mean_nll(params: &ModelParams, pairs: &[SequencePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::input("no pairs to score"));
    }
    let w = Weights::from_params(params);
    let scores = par::map(pairs, |p| crate::model::forward_weights(&w, &p.source, &p.reference));
    let mut total = 0.0;
    for s in scores {
        total -= s?.0.total_logprob;
    }
    Ok(total / pairs.len() as f64)
}

fn clip(grads: &mut crate::model::GradAccumulator, cap: Option<f64>) {
    if let Some(cap) = cap {
        let norm = grads.norm();
        if norm > cap {
            grads.scale(cap / norm);
        }
    }
}

/// Teacher-forced NLL training from a fresh seeded initialization.
pub fn pretrain_nll(train: &[SequencePair], vocab: Vocab, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::input("training split is empty"));
    }
    let mut params = init_params(vocab.size, cfg.embed_dim, cfg.hidden_dim, cfg.seed)?;
    if cfg.iters == 0 {
        return Ok(PretrainOutcome {
            params,
            checkpoints: Vec::new(),
            losses: Vec::new(),
        });
    }
    let mut rng = seed::rng(cfg.seed, "pretrain");
    let batch = cfg.batch_sentences.min(train.len());
    let mut checkpoints = Vec::new();
    let mut losses = Vec::new();
    let mut window = 0.0;
    let mut window_n = 0usize;
    for it in 1..=cfg.iters {
        let idx = sample_indices(&mut rng, train.len(), batch);
        let items: Vec<WeightedItem> = idx
            .iter()
            .map(|i| {
                let p = &train[i];
                WeightedItem::new(&p.source, &p.reference, -1.0 / batch as f64, ScoreKind::Total)
            })
            .collect();
        let (loss, mut grads) = weighted_backward_weights(&Weights::from_params(&params), &items)?;
        if !loss.is_finite() || !grads.norm().is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                message: format!("non-finite NLL {loss}"),
            });
        }
        clip(&mut grads, cfg.clip_norm);
        let frac = if cfg.iters > 1 {
            (it - 1) as f64 / (cfg.iters - 1) as f64
        } else {
            0.0
        };
        sgd_step(&mut params, &grads, cfg.lr + (cfg.lr_final - cfg.lr) * frac)?;
        window += loss;
        window_n += 1;
        if it % cfg.ckpt_every == 0 || it == cfg.iters {
            checkpoints.push((it, params.clone()));
            losses.push(window / window_n as f64);
            log::info!("pretrain iter {it}: nll {:.4}", window / window_n as f64);
            window = 0.0;
            window_n = 0;
        }
    }
    let start = checkpoints.len().saturating_sub(cfg.average_last);
    let tail: Vec<ModelParams> = checkpoints[start..].iter().map(|(_, p)| p.clone()).collect();
    Ok(PretrainOutcome {
        params: average_checkpoints(&tail)?,
        checkpoints,
        losses,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub n: usize,
    pub beam_width_train: usize,
    pub eval_every: usize,
    pub max_iters: usize,
    pub topk_for_mean: usize,
    pub batch_sentences: usize,
    /// Size of the fixed validation slice.
    pub valid_size: usize,
    pub seed: u64,
    /// Keep every training candidate set's rewards in the outcome.
    pub record_candidate_sets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            n: 10,
            beam_width_train: 10,
            eval_every: 20,
            max_iters: 1000,
            topk_for_mean: 10,
            batch_sentences: 8,
            valid_size: 200,
            seed: 1,
            record_candidate_sets: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("train.eval_every", "must be at least 1"));
        }
        if self.topk_for_mean == 0 {
            return Err(Error::config("train.topk_for_mean", "must be at least 1"));
        }
        if self.batch_sentences == 0 {
            return Err(Error::config("train.batch_sentences", "must be positive"));
        }
        if self.valid_size == 0 {
            return Err(Error::config("train.valid_size", "must be positive"));
        }
        BeamConfig::new(self.beam_width_train, self.n, true)
            .validate()
            .map_err(|_| Error::config("train.beam_width", format!("must be >= train.n ({})", self.n)))
    }
}

/// One validation point of a fine-tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    #[serde(rename = "iter")]
    pub iteration: usize,
    /// Mean reward of the top candidate over the validation slice.
    #[serde(rename = "best_response")]
    pub best_response_reward: f64,
    /// Mean over validation sentences of the mean reward of the top-k candidates.
    #[serde(rename = "mean_topk")]
    pub mean_topk_reward: f64,
    /// Mean per-sentence objective value since the previous record.
    #[serde(rename = "loss")]
    pub train_loss: f64,
    /// Fraction of training candidate sets since the previous record whose
    /// rewards all tie.
    pub tie_rate: f64,
}

/// Validation curves for an auxiliary reward tracked alongside the training reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxLogRecord {
    pub iter: usize,
    pub reward: String,
    pub best_response: f64,
    pub mean_topk: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Checkpoint with the highest validation best-response reward (earliest on ties).
    pub best_params: ModelParams,
    pub best_iter: usize,
    pub final_params: ModelParams,
    pub log: Vec<TrainLogRecord>,
    pub aux_log: Vec<AuxLogRecord>,
    /// Per iteration, the reward vector of each training candidate set.
    /// Empty unless `record_candidate_sets` is set.
    pub candidate_rewards: Vec<Vec<Vec<f64>>>,
}

/// Best-response and mean top-k reward over a validation slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationScores {
    pub best_response: f64,
    pub mean_topk: f64,
}

fn score_sets(
    sets: &[CandidateSet],
    refs: &[&SequencePair],
    reward: &dyn RewardFunction,
    topk: usize,
) -> Result<ValidationScores> {
    let mut best = 0.0;
    let mut mean = 0.0;
    for (i, (set, pair)) in sets.iter().zip(refs).enumerate() {
        let rewards = set
            .candidates
            .iter()
            .take(topk)
            .map(|c| reward.evaluate(&c.tokens, &pair.reference))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Reward {
                index: i,
                message: e.to_string(),
            })?;
        best += rewards.first().copied().unwrap_or(0.0);
        mean += rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
    }
    let n = sets.len().max(1) as f64;
    Ok(ValidationScores {
        best_response: best / n,
        mean_topk: mean / n,
    })
}

fn decode_all(w: &Weights, pairs: &[&SequencePair], cfg: &BeamConfig) -> Result<Vec<CandidateSet>> {
    par::map(pairs, |p| beam_search_weights(w, &p.source, cfg))
        .into_iter()
        .collect()
}

/// Validation scores of `params` under each reward, from one shared decode.
pub fn validate_rewards(
    params: &ModelParams,
    valid: &[&SequencePair],
    rewards: &[&dyn RewardFunction],
    beam: &BeamConfig,
    topk: usize,
) -> Result<Vec<ValidationScores>> {
    let sets = decode_all(&Weights::from_params(params), valid, beam)?;
    rewards.iter().map(|r| score_sets(&sets, valid, *r, topk)).collect()
}

struct SentenceStep {
    loss: f64,
    tied: bool,
    rewards: Vec<f64>,
    items: Vec<WeightedItem>,
}

/// Reward fine-tuning from `baseline`.
///
/// Each iteration beam-searches `n` candidates for a batch of training
/// sentences, scores them with `reward`, evaluates the objective per sentence
/// and applies one SGD step on the summed λ-weighted gradient. Every
/// `eval_every` iterations (and at iteration 0) the validation slice is
/// decoded and a [`TrainLogRecord`] appended; `on_eval` sees each record
/// together with the parameters it was computed from.
#[allow(clippy::too_many_arguments)]
pub fn finetune_reward<F>(
    baseline: &ModelParams,
    train: &[SequencePair],
    valid: &[SequencePair],
    reward: &dyn RewardFunction,
    aux_rewards: &[&dyn RewardFunction],
    objective: &ObjectiveConfig,
    cfg: &TrainConfig,
    mut on_eval: F,
) -> Result<FinetuneOutcome>
where
    F: FnMut(&TrainLogRecord, &ModelParams) -> Result<()>,
{
    cfg.validate()?;
    objective.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::input("fine-tuning needs non-empty train and validation splits"));
    }
    let valid: Vec<&SequencePair> = valid.iter().take(cfg.valid_size).collect();
    let beam = BeamConfig::new(cfg.beam_width_train, cfg.n, objective.length_norm_scores);
    let mut all_rewards: Vec<&dyn RewardFunction> = vec![reward];
    all_rewards.extend_from_slice(aux_rewards);

    let mut params = baseline.clone();
    let mut log = Vec::new();
    let mut aux_log = Vec::new();
    let mut candidate_rewards = Vec::new();

    let mut evaluate = |iter: usize, params: &ModelParams, loss: f64, tie_rate: f64| -> Result<TrainLogRecord> {
        let scores = validate_rewards(params, &valid, &all_rewards, &beam, cfg.topk_for_mean)?;
        for (r, s) in all_rewards.iter().zip(&scores).skip(1) {
            aux_log.push(AuxLogRecord {
                iter,
                reward: r.name().to_string(),
                best_response: s.best_response,
                mean_topk: s.mean_topk,
            });
        }
        Ok(TrainLogRecord {
            iteration: iter,
            best_response_reward: scores[0].best_response,
            mean_topk_reward: scores[0].mean_topk,
            train_loss: loss,
            tie_rate,
        })
    };

    let first = evaluate(0, &params, 0.0, 0.0)?;
    on_eval(&first, &params)?;
    let mut best = (first.best_response_reward, 0usize, params.clone());
    log.push(first);

    let mut rng = seed::rng(cfg.seed, "finetune");
    let batch = cfg.batch_sentences.min(train.len());
    let mut window_loss = 0.0;
    let mut window_sets = 0usize;
    let mut window_ties = 0usize;
    for it in 1..=cfg.max_iters {
        let idx: Vec<usize> = sample_indices(&mut rng, train.len(), batch).into_vec();
        let weights = Weights::from_params(&params);
        let steps: Vec<Result<SentenceStep>> = par::map(&idx, |&i| {
            let pair = &train[i];
            let mut set = beam_search_weights(&weights, &pair.source, &beam)?;
            for c in &mut set.candidates {
                let r = reward.evaluate(&c.tokens, &pair.reference).map_err(|e| Error::Reward {
                    index: i,
                    message: e.to_string(),
                })?;
                c.reward = Some(r);
            }
            let rewards: Vec<f64> = set.candidates.iter().map(|c| c.reward.unwrap()).collect();
            let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
            let out = compute_objective(&set, objective)?;
            let items = out
                .weights
                .iter()
                .map(|&(ci, lambda)| WeightedItem::new(&pair.source, &set.candidates[ci].tokens, lambda, out.score))
                .collect();
            Ok(SentenceStep {
                loss: out.loss,
                tied: hi == lo,
                rewards,
                items,
            })
        });
        let mut items = Vec::new();
        let mut iter_rewards = Vec::new();
        for s in steps {
            let s = s?;
            if !s.loss.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    message: format!("non-finite objective {}", s.loss),
                });
            }
            window_loss += s.loss;
            window_sets += 1;
            window_ties += s.tied as usize;
            items.extend(s.items);
            if cfg.record_candidate_sets {
                iter_rewards.push(s.rewards);
            }
        }
        if cfg.record_candidate_sets {
            candidate_rewards.push(iter_rewards);
        }
        if !items.is_empty() {
            let (_, grads) = weighted_backward_weights(&weights, &items)?;
            sgd_step(&mut params, &grads, cfg.lr)?;
            if !params.is_finite() {
                return Err(Error::Diverged {
                    iteration: it,
                    message: "non-finite parameters after update".into(),
                });
            }
        }
        if it % cfg.eval_every == 0 || it == cfg.max_iters {
            let rec = evaluate(
                it,
                &params,
                window_loss / window_sets.max(1) as f64,
                window_ties as f64 / window_sets.max(1) as f64,
            )?;
            log::info!(
                "finetune iter {it}: best-response {:.4} mean-top{} {:.4} loss {:.4} ties {:.3}",
                rec.best_response_reward,
                cfg.topk_for_mean,
                rec.mean_topk_reward,
                rec.train_loss,
                rec.tie_rate
            );
            on_eval(&rec, &params)?;
            if rec.best_response_reward > best.0 {
                best = (rec.best_response_reward, it, params.clone());
            }
            log.push(rec);
            window_loss = 0.0;
            window_sets = 0;
            window_ties = 0;
        }
    }
    Ok(FinetuneOutcome {
        best_params: best.2,
        best_iter: best.1,
        final_params: params,
        log,
        aux_log,
        candidate_rewards,
    })
}

/// Draws `k` indices from `0..len`, with replacement when `len < k`.
pub fn sample_with_fallback<R: Rng>(rng: &mut R, len: usize, k: usize) -> Vec<usize> {
    if len >= k {
        sample_indices(rng, len, k).into_vec()
    } else {
        (0..k).map(|_| rng.gen_range(0..len)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub value: f64,
    pub compare: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sentences: usize,
    /// Corpus mean of sentence-level scores of the top-1 decode, per reward.
    pub metrics: Vec<MetricRow>,
    /// Mean token edit distance between this model's and the comparison model's decodes.
    pub edit_distance: Option<f64>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// `metric,model,compare,delta`; comparison columns empty without a second model.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,model,compare,delta\n");
        for m in &self.metrics {
            match m.compare {
                Some(c) => s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", m.name, m.value, c, m.value - c)),
                None => s.push_str(&format!("{},{:.6},,\n", m.name, m.value)),
            }
        }
        if let Some(ed) = self.edit_distance {
            s.push_str(&format!("edit_distance,{ed:.6},,\n"));
        }
        s
    }
}

/// Top-1 decodes of `params` (and `compare`, when given) scored by every reward.
pub fn evaluate_model(
    params: &ModelParams,
    pairs: &[SequencePair],
    rewards: &[&dyn RewardFunction],
    beam: &BeamConfig,
    compare: Option<&ModelParams>,
) -> Result<(EvalReport, Vec<CandidateSet>)> {
    if pairs.is_empty() {
        return Err(Error::input("evaluation split is empty"));
    }
    let refs: Vec<&SequencePair> = pairs.iter().collect();
    let sets = decode_all(&Weights::from_params(params), &refs, beam)?;
    let other = match compare {
        Some(p) => Some(decode_all(&Weights::from_params(p), &refs, beam)?),
        None => None,
    };
    let mut metrics = Vec::new();
    for r in rewards {
        let value = score_sets(&sets, &refs, *r, 1)?.best_response;
        let compare = match &other {
            Some(o) => Some(score_sets(o, &refs, *r, 1)?.best_response),
            None => None,
        };
        metrics.push(MetricRow {
            name: r.name().to_string(),
            value,
            compare,
        });
    }
    let edit_distance = other.as_ref().map(|o| {
        let total: usize = sets
            .iter()
            .zip(o)
            .map(|(a, b)| {
                let ta = a.top().map(|c| c.tokens.as_slice()).unwrap_or(&[]);
                let tb = b.top().map(|c| c.tokens.as_slice()).unwrap_or(&[]);
                token_edit_distance(ta, tb)
            })
            .sum();
        total as f64 / sets.len() as f64
    });
    Ok((
        EvalReport {
            sentences: pairs.len(),
            metrics,
            edit_distance,
        },
        sets,
    ))
}
