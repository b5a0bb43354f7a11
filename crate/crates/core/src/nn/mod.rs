//! Batch-normalized multilayer perceptron that learns the reported-vs-true
//! position error from 118-float state records.

mod dataset;
mod mlp;
mod real;
mod train;

pub use dataset::{
    split_by_trajectory, split_random_points, Dataset, DatasetSplit, Normalization, SplitKind, SplitSpec,
    TrainingPair, TrajectorySpan, MIN_TRAJECTORIES,
};
pub use mlp::{mse, Activation, ForwardCache, Mlp, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};
pub use real::Real;
pub use train::{
    correct_position, train, train_with, ErrorCorrector, HistoryEntry, LearningRateMode, TrainingConfig,
    TrainingOutcome,
};

use crate::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("layer sizes do not fit together")]
    InvalidArchitecture,
    #[error("parameters must be finite with positive running variance")]
    InvalidParameters,
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite feature {index} in row {row}")]
    NonFiniteFeature { row: usize, index: usize },
    #[error("training-mode batch needs at least two rows, got {0}")]
    BatchTooSmall(usize),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, history: Vec<HistoryEntry> },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("pairs of trajectory {0} are not contiguous")]
    NonContiguousTrajectory(u32),
    #[error("{have} trajectories, at least {need} needed")]
    TooFewTrajectories { have: usize, need: usize },
    #[error("{split} split holds {realized:.3} of the samples, target {target:.3}")]
    SplitImbalance { split: &'static str, realized: f64, target: f64 },
    #[error("invalid split: {0}")]
    InvalidSplit(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
}
