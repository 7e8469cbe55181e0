use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    TooLong { len: usize, max: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("alignment out of range: {0}")]
    AlignmentRange(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("position {0} has no alignment partner")]
    Unaligned(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss")]
    NonFinite,

    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),
}
