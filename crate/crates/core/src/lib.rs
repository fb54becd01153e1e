//! Sequence-level reward optimization for a tiny attention encoder-decoder.
//!
//! The crate covers the whole loop: synthetic parallel corpora
//! ([`synthdata`]), an exactly differentiable model ([`model`]), beam and
//! sampled candidate sets ([`decoding`]), rewards including a learned-metric
//! surrogate ([`rewards`]), the family of structured objectives ending in the
//! contrastive-margin loss ([`objectives`]), NLL pretraining and reward
//! fine-tuning ([`trainer`]) and metric-agreement analyses ([`analysis`]).

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod decoding;
pub mod error;
pub mod model;
pub mod objectives;
pub mod par;
pub mod rewards;
pub mod seed;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
