//! Word-exchange aligning pre-training at desk scale.
//!
//! The pipeline: an EM word aligner produces links between parallel
//! sentences ([`aligner`]); links become an exchange matrix over the
//! concatenated `[CLS] S [SEP] T [SEP]` sequence ([`exchange`]); a small
//! transformer encoder is trained with a multilingual masked-prediction head
//! and a cross-lingual head that predicts each masked word from its aligned
//! partner's representation ([`model`], [`training`]); and [`eval`] measures
//! how well the learned static embeddings line up across languages.

pub mod aligner;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exchange;
pub mod model;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
