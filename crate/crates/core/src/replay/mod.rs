//! Experience replay store, P2Value priorities and prioritized sampling.

mod buffer;
mod entry;
pub mod persist;
mod priority;
mod sum_tree;

use std::path::Path;
use thiserror::Error;

pub use buffer::{PrioritySampler, ReplayBuffer, SamplingMode};
pub use entry::{normalized_probability, PassRate, ReplayEntry};
pub use persist::{load, persist};
pub use priority::{
    descending_ranks, p2value, priorities_from_values, sampling_distribution, PriorityConfig,
    PriorityScheme,
};
pub use sum_tree::SumTree;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("untested entry (insertion index {0})")]
    UntestedEntry(u64),
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("no entries eligible for replay")]
    NoEligibleEntries,
    #[error("non-positive priority {value} at position {position}")]
    NonPositivePriority { position: usize, value: f64 },
    #[error("cannot draw {requested} distinct entries from {available}")]
    NotEnoughEntries { requested: usize, available: usize },
    #[error("invalid priority config: {0}")]
    InvalidConfig(String),
    #[error("malformed entry: {0}")]
    MalformedEntry(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ReplayError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ReplayError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
