//! Sequence-level rewards over token-id sequences.

mod bleu;
mod edit;
mod histogram;
mod learned;

pub use bleu::{ngram_counts, smoothed_bleu, SmoothedBleu, DEFAULT_MAX_N};
pub use edit::{edit_similarity, token_edit_distance, EditSimilarity};
pub use histogram::{reward_histogram, Histogram, HistogramBin};
pub use learned::{
    fit_learned_metric, learned_metric_score, metric_features, synthetic_judgments, train_learned_metric,
    FeatureVector, JudgedPair, LearnedMetric, LearnedMetricParams, MetricFit, FEATURE_COUNT, FEATURE_VERSION,
};

use crate::error::Result;
use crate::synthdata::Token;

/// A sequence-level reward `R(hypothesis; reference)`.
pub trait RewardFunction: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64>;
}

impl<R: RewardFunction + ?Sized> RewardFunction for Box<R> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64> {
        (**self).evaluate(hypothesis, reference)
    }
}

impl<R: RewardFunction + ?Sized> RewardFunction for std::sync::Arc<R> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn evaluate(&self, hypothesis: &[Token], reference: &[Token]) -> Result<f64> {
        (**self).evaluate(hypothesis, reference)
    }
}
