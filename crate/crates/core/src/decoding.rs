//! Candidate generation: beam search and ancestral sampling.
//!
//! Decoding only emits payload tokens and EOS; PAD, BOS and UNK are never
//! proposed and EOS is not allowed as the first token. A hypothesis reaching
//! the length cap (default `2·|X| + 5`) is closed with EOS, and the EOS
//! log-probability is part of its score, so decoded scores always agree with
//! [`forward_logprob`](crate::model::forward_logprob).

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{decoder_step, encode, network::check_tokens, ModelParams, SequenceScore, Weights};
use crate::par;
use crate::seed;
use crate::synthdata::{self, Token, BOS, EOS, FIRST_PAYLOAD};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Payload tokens, without BOS/EOS.
    pub tokens: Vec<Token>,
    pub score: SequenceScore,
    pub reward: Option<f64>,
}

/// A deduplicated candidate list sorted by ranking score (descending), ties
/// broken by ascending lexicographic token order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
    pub source: Vec<Token>,
    pub n: usize,
    pub length_norm: bool,
}

fn rank_order(a: (f64, &[Token]), b: (f64, &[Token])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl CandidateSet {
    /// Deduplicates (keeping the first occurrence), sorts and truncates to `n`.
    pub fn from_candidates(source: Vec<Token>, n: usize, length_norm: bool, mut candidates: Vec<Candidate>) -> Self {
        let mut seen = std::collections::HashSet::new();
        candidates.retain(|c| seen.insert(c.tokens.clone()));
        let key = |c: &Candidate| {
            if length_norm {
                c.score.normalized
            } else {
                c.score.total_logprob
            }
        };
        candidates.sort_by(|a, b| rank_order((key(a), &a.tokens), (key(b), &b.tokens)));
        candidates.truncate(n);
        CandidateSet {
            candidates,
            source,
            n,
            length_norm,
        }
    }

    pub fn ranking_score(&self, c: &Candidate) -> f64 {
        if self.length_norm {
            c.score.normalized
        } else {
            c.score.total_logprob
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The model-score argmax.
    pub fn top(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    pub fn rewards(&self) -> Option<Vec<f64>> {
        self.candidates.iter().map(|c| c.reward).collect()
    }

    /// Checks distinctness, strict ordering, size bound and finiteness.
    pub fn check_invariants(&self) -> Result<()> {
        if self.candidates.len() > self.n {
            return Err(Error::Internal(format!(
                "{} candidates exceed N = {}",
                self.len(),
                self.n
            )));
        }
        for c in &self.candidates {
            if c.tokens.is_empty() || !c.score.total_logprob.is_finite() {
                return Err(Error::Internal("empty or non-finite candidate".into()));
            }
        }
        for pair in self.candidates.windows(2) {
            let a = (self.ranking_score(&pair[0]), pair[0].tokens.as_slice());
            let b = (self.ranking_score(&pair[1]), pair[1].tokens.as_slice());
            if rank_order(a, b) != Ordering::Less {
                return Err(Error::Internal("candidates not strictly ordered".into()));
            }
        }
        let mut toks: Vec<&Vec<Token>> = self.candidates.iter().map(|c| &c.tokens).collect();
        toks.sort();
        toks.dedup();
        if toks.len() != self.candidates.len() {
            return Err(Error::Internal("duplicate candidates".into()));
        }
        Ok(())
    }
}

pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub n: usize,
    pub length_norm: bool,
    /// Payload length cap; `None` means `2·|X| + 5`.
    pub max_len: Option<usize>,
}

impl BeamConfig {
    pub fn new(beam_width: usize, n: usize, length_norm: bool) -> Self {
        BeamConfig {
            beam_width,
            n,
            length_norm,
            max_len: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("decode.n", "N must be at least 1"));
        }
        if self.n > self.beam_width {
            return Err(Error::config(
                "decode.beam_width",
                format!("beam width {} is smaller than N = {}", self.beam_width, self.n),
            ));
        }
        if self.max_len == Some(0) {
            return Err(Error::config("decode.max_len", "must be positive"));
        }
        Ok(())
    }
}

fn check_decodable(w: &Weights, source: &[Token]) -> Result<()> {
    check_tokens(w, source, "source")?;
    if w.vocab_size <= FIRST_PAYLOAD as usize {
        return Err(Error::input("vocabulary has no payload tokens"));
    }
    Ok(())
}

struct Hyp {
    tokens: Vec<Token>,
    state: Vec<f64>,
    total: f64,
}

/// Beam search on a prepared 64-bit weight copy.
pub fn beam_search_weights(w: &Weights, source: &[Token], cfg: &BeamConfig) -> Result<CandidateSet> {
    cfg.validate()?;
    check_decodable(w, source)?;
    let max_len = cfg.max_len.unwrap_or_else(|| default_max_len(source.len()));
    let enc = encode(w, source);
    let mut alive = vec![Hyp {
        tokens: Vec::new(),
        state: enc.initial_state(),
        total: 0.0,
    }];
    let mut finished: Vec<Candidate> = Vec::new();

    while !alive.is_empty() && finished.len() < cfg.beam_width {
        // (hyp index, token, total, new state index)
        let mut expansions: Vec<(usize, Token, f64)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (hi, hyp) in alive.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (state, logp) = decoder_step(w, &enc, &hyp.state, prev);
            if !hyp.tokens.is_empty() {
                expansions.push((hi, EOS, hyp.total + logp[EOS as usize]));
            }
            if hyp.tokens.len() < max_len {
                for t in FIRST_PAYLOAD..w.vocab_size as Token {
                    expansions.push((hi, t, hyp.total + logp[t as usize]));
                }
            }
            states.push(state);
        }
        // stable: equal totals keep generation order
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2));
        expansions.truncate(cfg.beam_width);

        let mut next = Vec::new();
        for (hi, t, total) in expansions {
            let hyp = &alive[hi];
            if t == EOS {
                finished.push(Candidate {
                    tokens: hyp.tokens.clone(),
                    score: SequenceScore::new(total, hyp.tokens.len() + 1),
                    reward: None,
                });
            } else {
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                next.push(Hyp {
                    tokens,
                    state: states[hi].clone(),
                    total,
                });
            }
        }
        alive = next;
    }
    Ok(CandidateSet::from_candidates(
        source.to_vec(),
        cfg.n,
        cfg.length_norm,
        finished,
    ))
}

/// Beam search producing up to `cfg.n` distinct candidates.
pub fn beam_search(params: &ModelParams, source: &[Token], cfg: &BeamConfig) -> Result<CandidateSet> {
    beam_search_weights(&Weights::from_params(params), source, cfg)
}

/// Beam search over many sources, in parallel when enabled.
pub fn beam_search_batch(params: &ModelParams, sources: &[Vec<Token>], cfg: &BeamConfig) -> Result<Vec<CandidateSet>> {
    let w = Weights::from_params(params);
    par::map(sources, |s| beam_search_weights(&w, s, cfg))
        .into_iter()
        .collect()
}

/// Argmax decoding over payload tokens and EOS.
pub fn greedy_decode(params: &ModelParams, source: &[Token], max_len: Option<usize>) -> Result<Vec<Token>> {
    let w = Weights::from_params(params);
    check_decodable(&w, source)?;
    let max_len = max_len.unwrap_or_else(|| default_max_len(source.len()));
    let enc = encode(&w, source);
    let mut state = enc.initial_state();
    let mut tokens = Vec::new();
    loop {
        let prev = tokens.last().copied().unwrap_or(BOS);
        let (s, logp) = decoder_step(&w, &enc, &state, prev);
        state = s;
        if tokens.len() == max_len {
            break;
        }
        let mut best = (f64::NEG_INFINITY, EOS);
        if !tokens.is_empty() {
            best = (logp[EOS as usize], EOS);
        }
        for t in FIRST_PAYLOAD..w.vocab_size as Token {
            if logp[t as usize] > best.0 {
                best = (logp[t as usize], t);
            }
        }
        if best.1 == EOS {
            break;
        }
        tokens.push(best.1);
    }
    Ok(tokens)
}

/// Draws `n` ancestral samples at the given temperature.
///
/// At every step the sampling distribution is the model distribution
/// restricted to the allowed tokens, sharpened by `1/temperature` and
/// renormalized. Candidate scores are the untempered model log-probabilities.
/// Duplicate samples collapse, so the set may hold fewer than `n` entries.
pub fn sample_candidates(
    params: &ModelParams,
    source: &[Token],
    n: usize,
    temperature: f64,
    seed: u64,
    length_norm: bool,
) -> Result<CandidateSet> {
    if !(temperature > 0.0) {
        return Err(Error::config("decode.temperature", "must be positive"));
    }
    if n == 0 {
        return Err(Error::config("decode.n", "N must be at least 1"));
    }
    let w = Weights::from_params(params);
    check_decodable(&w, source)?;
    let max_len = default_max_len(source.len());
    let enc = encode(&w, source);
    let mut rng = seed::rng(seed, "sample");
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut state = enc.initial_state();
        let mut tokens: Vec<Token> = Vec::new();
        let mut total = 0.0;
        loop {
            let prev = tokens.last().copied().unwrap_or(BOS);
            let (s, logp) = decoder_step(&w, &enc, &state, prev);
            state = s;
            let mut allowed: Vec<Token> = Vec::new();
            if !tokens.is_empty() {
                allowed.push(EOS);
            }
            if tokens.len() < max_len {
                allowed.extend(FIRST_PAYLOAD..w.vocab_size as Token);
            }
            let t = sample_restricted(&logp, &allowed, temperature, &mut rng);
            total += logp[t as usize];
            if t == EOS {
                break;
            }
            tokens.push(t);
        }
        let steps = tokens.len() + 1;
        samples.push(Candidate {
            tokens,
            score: SequenceScore::new(total, steps),
            reward: None,
        });
    }
    Ok(CandidateSet::from_candidates(source.to_vec(), n, length_norm, samples))
}

fn sample_restricted<R: Rng>(logp: &[f64], allowed: &[Token], temperature: f64, rng: &mut R) -> Token {
    let scaled: Vec<f64> = allowed.iter().map(|&t| logp[t as usize] / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * sum;
    for (&t, &wt) in allowed.iter().zip(&weights) {
        if u < wt {
            return t;
        }
        u -= wt;
    }
    // rounding fell off the end: take the heaviest token
    let best = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    allowed[best]
}

/// Writes the top candidate of each set, one sentence per line.
pub fn write_hypotheses(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    let lines: Vec<Vec<Token>> = sets
        .iter()
        .map(|s| s.top().map(|c| c.tokens.clone()).unwrap_or_default())
        .collect();
    synthdata::write_lines(path, &lines)
}
