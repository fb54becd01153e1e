//! Brute-force reference implementations shared by the focused tests and the
//! acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqreward::decoding::{Candidate, CandidateSet};
use seqreward::model::{
    forward_logprob, init_params, weighted_backward_weights, weighted_loss, ModelParams, ScoreKind, SequenceScore,
    WeightedItem, Weights,
};
use seqreward::objectives::{compute_objective, ObjectiveConfig};
use seqreward::synthdata::{Token, FIRST_PAYLOAD};

pub fn random_seq(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<Token> {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| rng.gen_range(FIRST_PAYLOAD..vocab as Token)).collect()
}

/// Seeded init with every tensor multiplied by `scale`.
pub fn scaled_params(vocab: usize, e: usize, h: usize, seed: u64, scale: f32) -> ModelParams {
    let mut p = init_params(vocab, e, h, seed).unwrap();
    for t in &mut p.tensors {
        t.data.iter_mut().for_each(|v| *v *= scale);
    }
    p
}

pub struct FdCase {
    pub weights: Weights,
    pub items: Vec<WeightedItem>,
}

pub fn fd_case(seed: u64) -> FdCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = rng.gen_range(5..9);
    let e = rng.gen_range(1..4);
    let h = rng.gen_range(1..4);
    // larger init than training so every path carries signal
    let params = scaled_params(vocab, e, h, seed, 6.0);
    let n_items = rng.gen_range(1..4);
    let items = (0..n_items)
        .map(|_| {
            let score = if rng.gen_bool(0.5) {
                ScoreKind::Total
            } else {
                ScoreKind::Normalized
            };
            WeightedItem::new(
                &random_seq(&mut rng, vocab, 4),
                &random_seq(&mut rng, vocab, 4),
                rng.gen_range(-2.0..2.0),
                score,
            )
        })
        .collect();
    FdCase {
        weights: Weights::from_params(&params),
        items,
    }
}

/// Worst relative error of the analytic gradient against central differences
/// (ε = 1e-4) over coordinates with |analytic| > 1e-8, and how many were checked.
/// Coordinates with a zero analytic gradient must have |fd| < 1e-7.
pub fn worst_fd_error(case: &FdCase) -> Result<(f64, usize), String> {
    let eps = 1e-4;
    let (_, grads) = weighted_backward_weights(&case.weights, &case.items).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (ti, buf) in grads.buffers.iter().enumerate() {
        for (i, &g) in buf.iter().enumerate() {
            let mut w = case.weights.clone();
            w.tensors[ti][i] += eps;
            let up = weighted_loss(&w, &case.items).unwrap();
            w.tensors[ti][i] -= 2.0 * eps;
            let down = weighted_loss(&w, &case.items).unwrap();
            let fd = (up - down) / (2.0 * eps);
            if g.abs() > 1e-8 {
                checked += 1;
                worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()));
            } else if fd.abs() >= 1e-7 {
                return Err(format!("analytic zero but fd {fd} at tensor {ti}[{i}]"));
            }
        }
    }
    Ok((worst, checked))
}

/// Candidate set whose total and normalized scores both equal `scores`.
pub fn scored_set(scores: &[f64], rewards: &[f64]) -> CandidateSet {
    let candidates = scores
        .iter()
        .zip(rewards)
        .enumerate()
        .map(|(i, (&s, &r))| Candidate {
            tokens: vec![4 + i as u32],
            score: SequenceScore {
                total_logprob: s,
                normalized: s,
            },
            reward: Some(r),
        })
        .collect();
    CandidateSet {
        candidates,
        source: vec![4],
        n: scores.len(),
        length_norm: false,
    }
}

/// Largest |λ_i − ∂L/∂s_i| with the derivative taken by central differences.
pub fn objective_fd_error(scores: &[f64], rewards: &[f64], cfg: &ObjectiveConfig) -> f64 {
    let eps = 1e-6;
    let loss = |s: &[f64]| compute_objective(&scored_set(s, rewards), cfg).unwrap().loss;
    let lambda = compute_objective(&scored_set(scores, rewards), cfg)
        .unwrap()
        .dense(scores.len());
    let mut worst = 0.0f64;
    for i in 0..scores.len() {
        let mut up = scores.to_vec();
        let mut down = scores.to_vec();
        up[i] += eps;
        down[i] -= eps;
        let fd = (loss(&up) - loss(&down)) / (2.0 * eps);
        worst = worst.max((fd - lambda[i]).abs());
    }
    worst
}

/// Random objective instance; every third one has coarse rewards with ties.
pub fn objective_instance(rng: &mut ChaCha8Rng, index: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let n = rng.gen_range(1..=10);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..0.0)).collect();
    let rewards: Vec<f64> = (0..n)
        .map(|_| {
            let r: f64 = rng.gen_range(0.0..1.0);
            if index.is_multiple_of(3) {
                (r * 4.0).round() / 4.0
            } else {
                r
            }
        })
        .collect();
    (scores, rewards, rng.gen_range(0.05..2.0))
}

/// Every payload sequence of length 1..=max_len.
pub fn all_sequences(vocab: usize, max_len: usize) -> Vec<Vec<Token>> {
    let payload: Vec<Token> = (FIRST_PAYLOAD..vocab as Token).collect();
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<Token>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &t in &payload {
                let mut s = seq.clone();
                s.push(t);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Top-`n` of the full enumeration, ranked like a beam result.
pub fn exhaustive(params: &ModelParams, source: &[Token], max_len: usize, n: usize, length_norm: bool) -> CandidateSet {
    let cands = all_sequences(params.vocab_size, max_len)
        .into_iter()
        .map(|tokens| {
            let (score, _) = forward_logprob(params, source, &tokens).unwrap();
            Candidate {
                tokens,
                score,
                reward: None,
            }
        })
        .collect();
    CandidateSet::from_candidates(source.to_vec(), n, length_norm, cands)
}

/// Quadratic-time Levenshtein distance.
pub fn dp_edit(a: &[Token], b: &[Token]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    d[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// τ-b by classifying every pair.
pub fn brute_tau(xs: &[f64], ys: &[f64]) -> Option<f64> {
    use std::cmp::Ordering::Equal;
    let (mut p, mut q, mut only_x, mut only_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            match (xs[i].partial_cmp(&xs[j]).unwrap(), ys[i].partial_cmp(&ys[j]).unwrap()) {
                (Equal, Equal) => {}
                (Equal, _) => only_x += 1,
                (_, Equal) => only_y += 1,
                (a, b) if a == b => p += 1,
                _ => q += 1,
            }
        }
    }
    let untied_x = p + q + only_y;
    let untied_y = p + q + only_x;
    if untied_x == 0 || untied_y == 0 {
        return None;
    }
    Some((p - q) as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt())
}

/// A pair of lists for the τ oracle: heavy ties, light ties or continuous values.
pub fn tau_lists(rng: &mut ChaCha8Rng, case: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(2..40);
    let levels = match case % 3 {
        0 => Some(rng.gen_range(1..4)),
        1 => Some(rng.gen_range(4..12)),
        _ => None,
    };
    let mut list = |levels: Option<u32>| -> Vec<f64> {
        (0..n)
            .map(|_| match levels {
                Some(l) => rng.gen_range(0..l) as f64,
                None => rng.gen_range(-1.0..1.0),
            })
            .collect()
    };
    let xs = list(levels);
    let ys = list(if case.is_multiple_of(2) { levels } else { None });
    (xs, ys)
}
