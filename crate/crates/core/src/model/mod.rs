//! The encoder-decoder: parameters, scoring, gradients and checkpoints.

pub mod checkpoint;
pub mod network;
pub mod params;

pub use network::{
    decoder_step, encode, forward_logprob, forward_weights, step_log_distributions, weighted_backward_weights,
    weighted_loss, weighted_nll_backward, Encoded, ScoreKind, SequenceScore, WeightedItem, Weights,
};
pub use params::{average_checkpoints, init_params, sgd_step, GradAccumulator, ModelParams, Tensor};
