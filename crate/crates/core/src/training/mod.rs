//! Mini-batch Adam training, per-clip cross-validation, metrics, and
//! checkpoints.

mod checkpoint;
mod cv;
mod metrics;
mod trainer;

pub use checkpoint::{CheckpointRecord, RngState, CHECKPOINT_VERSION};
pub use cv::{cross_validate, split_by_fold, CrossValidation, FoldResult};
pub use metrics::{
    metrics_from_confusion, ClassMetrics, ConfusionMatrix, FAverage, FoldMetrics, Metrics,
    MetricsReport, Summary,
};
pub use trainer::{evaluate, segments_to_batch, train_fold, EpochRecord, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdamConfig, TensorError};
use crate::dataset::DatasetError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("segment shape {got:?} does not match network input {expected:?}")]
    ShapeMismatch { expected: [usize; 2], got: [usize; 2] },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub anneal_factor: f64,
    /// Epochs between successive multiplications by `anneal_factor`.
    pub anneal_period: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub f_average: FAverage,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            base_lr: 1e-3,
            anneal_factor: 0.5,
            anneal_period: 20,
            weight_decay: 1e-4,
            epochs: 100,
            seed: 0,
            f_average: FAverage::Macro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base learning rate must be positive");
        }
        if !(self.anneal_factor > 0.0 && self.anneal_factor <= 1.0) {
            return bad("anneal factor must lie in (0, 1]");
        }
        if self.anneal_period == 0 {
            return bad("anneal period must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// `base_lr · anneal_factor^floor(epoch / anneal_period)`.
pub fn lr_schedule(config: &TrainConfig, epoch: usize) -> f64 {
    let halvings = (epoch / config.anneal_period.max(1)) as i32;
    config.base_lr * config.anneal_factor.powi(halvings)
}
