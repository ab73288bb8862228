//! Top-k candidate generation by beam search over a pluggable token model.

mod phase;
mod search;
mod toy_lm;
mod vocab;

use thiserror::Error;

pub use phase::{
    entry_from_hypothesis, sample_from_source, sample_phase, BeamSource, Candidate, CandidateSource,
    SamplePhaseReport,
};
pub use search::{
    beam_search, check_distribution, score_sequence, BeamConfig, Hypothesis, TokenModel,
    DISTRIBUTION_TOLERANCE,
};
pub use toy_lm::{toy_update, ToyLm};
pub use vocab::{TokenId, Vocabulary, DEFAULT_EOS};

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid beam config: {0}")]
    InvalidConfig(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("update weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("no tasks")]
    NoTasks,
    #[error("model backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Io(String),
}
