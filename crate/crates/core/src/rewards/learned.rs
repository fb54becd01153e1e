//! Learned-metric surrogate: an affine regressor over five agreement features,
//! fit by ridge least squares against synthetic quality judgments.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::bleu::clipped_matches;
use super::edit::edit_similarity;
use super::RewardFunction;
use crate::error::{Error, Result};
use crate::model::Tensor;
use crate::seed;
use crate::synthdata::{corrupt, Token, Vocab};

pub const FEATURE_COUNT: usize = 5;
pub const FEATURE_VERSION: &str = "ngram-f1-lenratio-editsim/v1";

pub type FeatureVector = [f64; FEATURE_COUNT];

const RIDGE: f64 = 1e-6;
const FALLBACK_RIDGE: f64 = 1e-3;

fn ngram_f1(hyp: &[Token], reference: &[Token], n: usize) -> f64 {
    let h = hyp.len().saturating_sub(n - 1);
    let r = reference.len().saturating_sub(n - 1);
    if h == 0 && r == 0 {
        // both too short to hold an n-gram
        return if hyp == reference { 1.0 } else { 0.0 };
    }
    if h == 0 || r == 0 {
        return 0.0;
    }
    let (m, _) = clipped_matches(hyp, reference, n);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / h as f64;
    let rc = m as f64 / r as f64;
    2.0 * p * rc / (p + rc)
}

/// `[unigram F1, bigram F1, trigram F1, min/max length ratio, edit similarity]`.
pub fn metric_features(hyp: &[Token], reference: &[Token]) -> Result<FeatureVector> {
    if reference.is_empty() {
        return Err(Error::input("metric features need a non-empty reference"));
    }
    if hyp.is_empty() {
        return Ok([0.0; FEATURE_COUNT]);
    }
    let (a, b) = (hyp.len() as f64, reference.len() as f64);
    Ok([
        ngram_f1(hyp, reference, 1),
        ngram_f1(hyp, reference, 2),
        ngram_f1(hyp, reference, 3),
        a.min(b) / a.max(b),
        edit_similarity(hyp, reference),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedMetricParams {
    pub weights: FeatureVector,
    pub bias: f64,
    pub feature_version: String,
}

impl LearnedMetricParams {
    pub fn new(weights: FeatureVector, bias: f64) -> Self {
        LearnedMetricParams {
            weights,
            bias,
            feature_version: FEATURE_VERSION.to_string(),
        }
    }

    /// `w·φ + b` on a precomputed feature vector.
    pub fn predict(&self, features: &FeatureVector) -> f64 {
        self.weights.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + self.bias
    }

    /// Tensors `metric.w` (5) and `metric.b` (1) for the checkpoint container.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor {
                name: "metric.w".into(),
                dims: vec![FEATURE_COUNT],
                data: self.weights.iter().map(|&w| w as f32).collect(),
            },
            Tensor {
                name: "metric.b".into(),
                dims: vec![1],
                data: vec![self.bias as f32],
            },
        ]
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let find = |name: &str, len: usize| -> Result<&Tensor> {
            tensors
                .iter()
                .find(|t| t.name == name && t.data.len() == len)
                .ok_or_else(|| Error::input(format!("missing tensor `{name}` of length {len}")))
        };
        let w = find("metric.w", FEATURE_COUNT)?;
        let b = find("metric.b", 1)?;
        let mut weights = [0.0; FEATURE_COUNT];
        for (dst, &src) in weights.iter_mut().zip(&w.data) {
            *dst = src as f64;
        }
        let params = LearnedMetricParams::new(weights, b.data[0] as f64);
        if !params.weights.iter().all(|v| v.is_finite()) || !params.bias.is_finite() {
            return Err(Error::input("non-finite learned-metric parameters"));
        }
        Ok(params)
    }
}

/// Unbounded score `w·φ(hyp, ref) + b`.
pub fn learned_metric_score(params: &LearnedMetricParams, hyp: &[Token], reference: &[Token]) -> Result<f64> {
    Ok(params.predict(&metric_features(hyp, reference)?))
}

#[derive(Debug, Clone)]
pub struct LearnedMetric {
    pub params: LearnedMetricParams,
}

impl LearnedMetric {
    pub fn new(params: LearnedMetricParams) -> Self {
        LearnedMetric { params }
    }
}

impl RewardFunction for LearnedMetric {
    fn name(&self) -> &str {
        "learned"
    }

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64> {
        learned_metric_score(&self.params, hypothesis, reference)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgedPair {
    pub hypothesis: Vec<Token>,
    pub reference: Vec<Token>,
    pub gold: f64,
}

/// Fitted parameters plus any warnings raised while solving.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricFit {
    pub params: LearnedMetricParams,
    pub warnings: Vec<String>,
}

type Normal6 = SMatrix<f64, 6, 6>;

fn solve_ridge(gram: &Normal6, rhs: &SVector<f64, 6>, ridge: f64) -> Option<SVector<f64, 6>> {
    let mut a = *gram;
    // the bias column is not penalized
    for i in 0..FEATURE_COUNT {
        a[(i, i)] += ridge;
    }
    let sol = a.cholesky()?.solve(rhs);
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

// numerically rank deficient when the eigenvalue spread exceeds 1e10
fn is_degenerate(gram: &Normal6) -> bool {
    let eig = gram.symmetric_eigenvalues();
    let hi = eig.amax();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    !(lo > hi * 1e-10)
}

/// Ridge least squares `gold ≈ w·φ + b` on precomputed features.
pub fn fit_learned_metric(features: &[FeatureVector], gold: &[f64]) -> Result<MetricFit> {
    if features.len() != gold.len() {
        return Err(Error::input("features and gold scores differ in length"));
    }
    if features.len() < FEATURE_COUNT + 1 {
        return Err(Error::input(format!(
            "need at least {} judged pairs, got {}",
            FEATURE_COUNT + 1,
            features.len()
        )));
    }
    let mut gram = Normal6::zeros();
    let mut rhs = SVector::<f64, 6>::zeros();
    for (f, &g) in features.iter().zip(gold) {
        let mut x = SVector::<f64, 6>::zeros();
        for i in 0..FEATURE_COUNT {
            x[i] = f[i];
        }
        x[FEATURE_COUNT] = 1.0;
        gram += x * x.transpose();
        rhs += x * g;
    }
    let mut warnings = Vec::new();
    let first = if is_degenerate(&gram) {
        None
    } else {
        solve_ridge(&gram, &rhs, RIDGE)
    };
    let sol = match first {
        Some(s) => s,
        None => {
            let msg = format!("degenerate design matrix; refitting with ridge {FALLBACK_RIDGE}");
            log::warn!("{msg}");
            warnings.push(msg);
            solve_ridge(&gram, &rhs, FALLBACK_RIDGE)
                .ok_or_else(|| Error::input("design matrix is singular even with fallback ridge"))?
        }
    };
    let mut weights = [0.0; FEATURE_COUNT];
    for (i, w) in weights.iter_mut().enumerate() {
        *w = sol[i];
    }
    Ok(MetricFit {
        params: LearnedMetricParams::new(weights, sol[FEATURE_COUNT]),
        warnings,
    })
}

pub fn train_learned_metric(pairs: &[JudgedPair]) -> Result<MetricFit> {
    let features = pairs
        .iter()
        .map(|p| metric_features(&p.hypothesis, &p.reference))
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    fit_learned_metric(&features, &gold)
}

/// Hidden judge used to label synthetic pairs.
fn hidden_judge(hyp: &[Token], reference: &[Token]) -> Result<f64> {
    let f = metric_features(hyp, reference)?;
    Ok(0.5 * f[4] + 0.3 * f[0] + 0.2 * f[1])
}

/// Corrupts references at random severities and labels each pair with the
/// hidden judge plus Gaussian noise (σ = 0.05).
pub fn synthetic_judgments(
    references: &[Vec<Token>],
    vocab: Vocab,
    count: usize,
    seed: u64,
) -> Result<Vec<JudgedPair>> {
    if references.is_empty() {
        return Err(Error::input("no references to corrupt"));
    }
    let mut rng = seed::rng(seed, "judgments");
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let payload: Vec<Token> = vocab.payload().collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let reference = references[rng.gen_range(0..references.len())].clone();
        let severity: f64 = rng.gen_range(0.0..0.6);
        let mut hyp: Vec<Token> = reference
            .iter()
            .map(|&t| {
                if rng.gen_bool(severity) {
                    payload[rng.gen_range(0..payload.len())]
                } else {
                    t
                }
            })
            .collect();
        hyp = corrupt(&hyp, severity * 0.5, severity, &mut rng);
        let gold = hidden_judge(&hyp, &reference)? + noise.sample(&mut rng);
        out.push(JudgedPair {
            hypothesis: hyp,
            reference,
            gold,
        });
    }
    Ok(out)
}
