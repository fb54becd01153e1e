//! Forward pass, incremental decoding and backpropagation through time.
//!
//! Encoder: `h_t = tanh(emb(x_t)·W_e + h_{t-1}·U_e + b_e)`, `h_0 = 0`.
//! Decoder (initial state `d_0 = h_S`):
//! `c_t = Σ_i softmax_i(d_{t-1}·h_i) h_i`,
//! `d_t = tanh(emb(y_{t-1})·W_d + d_{t-1}·U_d + c_t·V_d + b_d)`,
//! `log p(y_t) = log_softmax(d_t·W_o + b_o)[y_t]`.
//!
//! All arithmetic runs on a 64-bit copy of the parameters ([`Weights`]).

use super::params::*;
use crate::error::{Error, Result};
use crate::par;
use crate::synthdata::{Token, BOS, EOS};

/// 64-bit working copy of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<Vec<f64>>,
}

impl Weights {
    pub fn from_params(p: &ModelParams) -> Self {
        Weights {
            vocab_size: p.vocab_size,
            embed_dim: p.embed_dim,
            hidden_dim: p.hidden_dim,
            tensors: p
                .tensors
                .iter()
                .map(|t| t.data.iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }

    fn emb(&self, t: Token) -> &[f64] {
        let e = self.embed_dim;
        &self.tensors[EMB][t as usize * e..(t as usize + 1) * e]
    }

    fn zero_grads(&self) -> GradAccumulator {
        GradAccumulator::from_shapes(&self.tensors.iter().map(Vec::len).collect::<Vec<_>>())
    }
}

/// Which sequence score an objective weight applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// Σ_t log p(y_t | y_<t, X), EOS included.
    Total,
    /// Total divided by the target length including EOS.
    Normalized,
}

impl ScoreKind {
    pub fn from_length_norm(length_norm: bool) -> Self {
        if length_norm {
            ScoreKind::Normalized
        } else {
            ScoreKind::Total
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceScore {
    pub total_logprob: f64,
    pub normalized: f64,
}

impl SequenceScore {
    /// `steps` counts predicted tokens including EOS.
    pub fn new(total_logprob: f64, steps: usize) -> Self {
        SequenceScore {
            total_logprob,
            normalized: total_logprob / steps as f64,
        }
    }

    pub fn get(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Total => self.total_logprob,
            ScoreKind::Normalized => self.normalized,
        }
    }
}

// a · W  (W is rows×cols row-major, a has `rows` entries), accumulated into out
fn vec_mat_acc(a: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += ai * wij;
        }
    }
}

// W · g, accumulated into out (out has `rows` entries)
fn mat_vec_acc(w: &[f64], g: &[f64], cols: usize, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
}

// G += a ⊗ g
fn outer_acc(a: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = g.len();
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = &mut out[i * cols..(i + 1) * cols];
        for (o, &gj) in row.iter_mut().zip(g) {
            *o += ai * gj;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place log-softmax.
pub fn log_softmax(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    for v in z.iter_mut() {
        *v -= lse;
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Encoder states `h_1..h_S` for one source sentence.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub states: Vec<Vec<f64>>,
}

impl Encoded {
    /// Decoder initial state.
    pub fn initial_state(&self) -> Vec<f64> {
        self.states.last().cloned().unwrap_or_default()
    }
}

pub fn check_tokens(w: &Weights, tokens: &[Token], what: &str) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::input(format!("{what} is empty")));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= w.vocab_size) {
        return Err(Error::input(format!(
            "{what} token {t} out of range for vocabulary of {}",
            w.vocab_size
        )));
    }
    Ok(())
}

pub fn encode(w: &Weights, source: &[Token]) -> Encoded {
    let h = w.hidden_dim;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(source.len());
    let zero = vec![0.0; h];
    for &x in source {
        let prev = states.last().unwrap_or(&zero);
        let mut pre = w.tensors[ENC_B].clone();
        vec_mat_acc(w.emb(x), &w.tensors[ENC_W], h, &mut pre);
        vec_mat_acc(prev, &w.tensors[ENC_U], h, &mut pre);
        pre.iter_mut().for_each(|v| *v = v.tanh());
        states.push(pre);
    }
    Encoded { states }
}

struct StepCache {
    attn: Vec<f64>,
    context: Vec<f64>,
    state: Vec<f64>,
    logits: Vec<f64>,
}

fn step_full(w: &Weights, enc: &Encoded, prev_state: &[f64], prev_token: Token) -> StepCache {
    let h = w.hidden_dim;
    let scores: Vec<f64> = enc.states.iter().map(|hi| dot(prev_state, hi)).collect();
    let attn = softmax(&scores);
    let mut context = vec![0.0; h];
    for (a, hi) in attn.iter().zip(&enc.states) {
        for (c, v) in context.iter_mut().zip(hi) {
            *c += a * v;
        }
    }
    let mut state = w.tensors[DEC_B].clone();
    vec_mat_acc(w.emb(prev_token), &w.tensors[DEC_W], h, &mut state);
    vec_mat_acc(prev_state, &w.tensors[DEC_U], h, &mut state);
    vec_mat_acc(&context, &w.tensors[DEC_V], h, &mut state);
    state.iter_mut().for_each(|v| *v = v.tanh());
    let mut logits = w.tensors[OUT_B].clone();
    vec_mat_acc(&state, &w.tensors[OUT_W], w.vocab_size, &mut logits);
    StepCache {
        attn,
        context,
        state,
        logits,
    }
}

/// One decoder step: returns the new state and log-probabilities over the vocabulary.
pub fn decoder_step(w: &Weights, enc: &Encoded, prev_state: &[f64], prev_token: Token) -> (Vec<f64>, Vec<f64>) {
    let StepCache { state, mut logits, .. } = step_full(w, enc, prev_state, prev_token);
    log_softmax(&mut logits);
    (state, logits)
}

/// Full per-step log-distributions for teacher-forced `target` (EOS step included).
pub fn step_log_distributions(w: &Weights, source: &[Token], target: &[Token]) -> Result<Vec<Vec<f64>>> {
    check_tokens(w, source, "source")?;
    check_tokens(w, target, "target")?;
    let enc = encode(w, source);
    let mut state = enc.initial_state();
    let mut prev = BOS;
    let mut out = Vec::with_capacity(target.len() + 1);
    for &y in target.iter().chain(std::iter::once(&EOS)) {
        let (s, logp) = decoder_step(w, &enc, &state, prev);
        out.push(logp);
        state = s;
        prev = y;
    }
    Ok(out)
}

/// Sequence log-probability of `target` given `source` on a 64-bit weight copy.
pub fn forward_weights(w: &Weights, source: &[Token], target: &[Token]) -> Result<(SequenceScore, Vec<f64>)> {
    let dists = step_log_distributions(w, source, target)?;
    let per_token: Vec<f64> = dists
        .iter()
        .zip(target.iter().chain(std::iter::once(&EOS)))
        .map(|(d, &y)| d[y as usize])
        .collect();
    let total = per_token.iter().sum();
    Ok((SequenceScore::new(total, per_token.len()), per_token))
}

/// Sequence score and per-token log-probabilities (last entry is EOS).
pub fn forward_logprob(params: &ModelParams, source: &[Token], target: &[Token]) -> Result<(SequenceScore, Vec<f64>)> {
    forward_weights(&Weights::from_params(params), source, target)
}

/// One term of a weighted sequence-score loss `Σ λ·s`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedItem {
    pub source: Vec<Token>,
    pub target: Vec<Token>,
    pub weight: f64,
    pub score: ScoreKind,
}

impl WeightedItem {
    pub fn new(source: &[Token], target: &[Token], weight: f64, score: ScoreKind) -> Self {
        WeightedItem {
            source: source.to_vec(),
            target: target.to_vec(),
            weight,
            score,
        }
    }
}

fn validate_items(w: &Weights, items: &[WeightedItem]) -> Result<()> {
    for it in items {
        if !it.weight.is_finite() {
            return Err(Error::input(format!("non-finite weight {}", it.weight)));
        }
        check_tokens(w, &it.source, "source")?;
        check_tokens(w, &it.target, "target")?;
    }
    Ok(())
}

/// Loss value only: `Σ λ_i · s_i`.
pub fn weighted_loss(w: &Weights, items: &[WeightedItem]) -> Result<f64> {
    validate_items(w, items)?;
    let mut total = 0.0;
    for it in items {
        let (score, _) = forward_weights(w, &it.source, &it.target)?;
        total += it.weight * score.get(it.score);
    }
    Ok(total)
}

fn backward_item(w: &Weights, it: &WeightedItem) -> (f64, GradAccumulator) {
    let mut grads = w.zero_grads();
    if it.weight == 0.0 {
        // still report the exact (zero) contribution
        return (0.0, grads);
    }
    let hd = w.hidden_dim;
    let vocab = w.vocab_size;
    let enc = encode(w, &it.source);

    // forward with caches
    let targets: Vec<Token> = it.target.iter().copied().chain(std::iter::once(EOS)).collect();
    let inputs: Vec<Token> = std::iter::once(BOS).chain(it.target.iter().copied()).collect();
    let mut states = vec![enc.initial_state()];
    let mut caches = Vec::with_capacity(targets.len());
    let mut total = 0.0;
    for (&x, &y) in inputs.iter().zip(&targets) {
        let c = step_full(w, &enc, states.last().unwrap(), x);
        let mut logp = c.logits.clone();
        log_softmax(&mut logp);
        total += logp[y as usize];
        states.push(c.state.clone());
        caches.push((c, softmax(&logp)));
    }
    let steps = targets.len();
    let score = SequenceScore::new(total, steps);
    let coef = match it.score {
        ScoreKind::Total => it.weight,
        ScoreKind::Normalized => it.weight / steps as f64,
    };

    let mut g_enc = vec![vec![0.0; hd]; enc.states.len()];
    let mut g_state = vec![0.0; hd];
    for t in (0..steps).rev() {
        let (c, probs) = &caches[t];
        let prev_state = &states[t];
        // output layer: d(log p_y)/dz = onehot(y) - p
        let mut g_z: Vec<f64> = probs.iter().map(|p| -coef * p).collect();
        g_z[targets[t] as usize] += coef;
        outer_acc(&c.state, &g_z, &mut grads.buffers[OUT_W]);
        for (g, v) in grads.buffers[OUT_B].iter_mut().zip(&g_z) {
            *g += v;
        }
        mat_vec_acc(&w.tensors[OUT_W], &g_z, vocab, &mut g_state);

        let g_pre: Vec<f64> = g_state.iter().zip(&c.state).map(|(g, d)| g * (1.0 - d * d)).collect();
        let x = inputs[t] as usize;
        let e = w.embed_dim;
        outer_acc(w.emb(inputs[t]), &g_pre, &mut grads.buffers[DEC_W]);
        mat_vec_acc(
            &w.tensors[DEC_W],
            &g_pre,
            hd,
            &mut grads.buffers[EMB][x * e..(x + 1) * e],
        );
        outer_acc(prev_state, &g_pre, &mut grads.buffers[DEC_U]);
        outer_acc(&c.context, &g_pre, &mut grads.buffers[DEC_V]);
        for (g, v) in grads.buffers[DEC_B].iter_mut().zip(&g_pre) {
            *g += v;
        }
        let mut g_prev = vec![0.0; hd];
        mat_vec_acc(&w.tensors[DEC_U], &g_pre, hd, &mut g_prev);
        let mut g_ctx = vec![0.0; hd];
        mat_vec_acc(&w.tensors[DEC_V], &g_pre, hd, &mut g_ctx);

        // attention: c = Σ a_i h_i, a = softmax(d_{t-1}·h_i)
        let g_a: Vec<f64> = enc.states.iter().map(|hi| dot(&g_ctx, hi)).collect();
        let mean_ga = dot(&c.attn, &g_a);
        for (i, hi) in enc.states.iter().enumerate() {
            let a = c.attn[i];
            let g_e = a * (g_a[i] - mean_ga);
            for k in 0..hd {
                g_enc[i][k] += a * g_ctx[k] + g_e * prev_state[k];
                g_prev[k] += g_e * hi[k];
            }
        }
        g_state = g_prev;
    }
    // d_0 = h_S
    if let Some(last) = g_enc.last_mut() {
        for (g, v) in last.iter_mut().zip(&g_state) {
            *g += v;
        }
    }

    let zero = vec![0.0; hd];
    let e = w.embed_dim;
    let mut g_h = vec![0.0; hd];
    for s in (0..enc.states.len()).rev() {
        for (g, v) in g_h.iter_mut().zip(&g_enc[s]) {
            *g += v;
        }
        let hs = &enc.states[s];
        let g_pre: Vec<f64> = g_h.iter().zip(hs).map(|(g, h)| g * (1.0 - h * h)).collect();
        let x = it.source[s];
        let prev = if s == 0 { &zero } else { &enc.states[s - 1] };
        outer_acc(w.emb(x), &g_pre, &mut grads.buffers[ENC_W]);
        let xi = x as usize;
        mat_vec_acc(
            &w.tensors[ENC_W],
            &g_pre,
            hd,
            &mut grads.buffers[EMB][xi * e..(xi + 1) * e],
        );
        outer_acc(prev, &g_pre, &mut grads.buffers[ENC_U]);
        for (g, v) in grads.buffers[ENC_B].iter_mut().zip(&g_pre) {
            *g += v;
        }
        let mut g_prev = vec![0.0; hd];
        mat_vec_acc(&w.tensors[ENC_U], &g_pre, hd, &mut g_prev);
        g_h = g_prev;
    }

    (it.weight * score.get(it.score), grads)
}

/// Loss `Σ λ_i·s_i` and its exact gradient, on a 64-bit weight copy.
pub fn weighted_backward_weights(w: &Weights, items: &[WeightedItem]) -> Result<(f64, GradAccumulator)> {
    validate_items(w, items)?;
    let parts = par::map(items, |it| backward_item(w, it));
    let mut grads = w.zero_grads();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grads.add_assign(g);
    }
    Ok((loss, grads))
}

/// Loss `Σ λ_i·s_i` over `items` and its gradient with respect to every parameter.
///
/// Every sequence-level objective reduces to this call: the objective supplies
/// λ_i = ∂L/∂s_i for each candidate and the gradient is Σ λ_i ∇s_i.
pub fn weighted_nll_backward(params: &ModelParams, items: &[WeightedItem]) -> Result<(f64, GradAccumulator)> {
    weighted_backward_weights(&Weights::from_params(params), items)
}
