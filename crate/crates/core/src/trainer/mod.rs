//! Minibatch construction, batch export, the closed training loop on the toy
//! model, and hyperparameter sweeps.

mod btp_loop;
mod minibatch;
mod sweep;

use thiserror::Error;

pub use btp_loop::{btp_loop, evaluate, EvalMetrics, IterationFailure, IterationMetrics, LoopConfig, LoopReport};
pub use minibatch::{
    buffer_version, build_minibatch, export_jsonl, read_jsonl, to_jsonl, ExportManifest, ExportRecord,
    Minibatch, MinibatchRecord, Provenance, MINIBATCH_FORMAT,
};
pub use sweep::{
    default_alpha_grid, default_k_grid, format_grid_value, sweep_alpha, sweep_k, SweepRow, SweepTable,
};

use crate::beam::BeamError;
use crate::harness::HarnessError;
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("task {0:?} not found")]
    MissingTask(String),
    #[error("invalid loop config: {0}")]
    InvalidConfig(String),
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error("sweep run for {value} failed: {message}")]
    Sweep { value: String, message: String },
    #[error("{0}")]
    Io(String),
}
