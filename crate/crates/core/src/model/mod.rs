//! Frequency-biased convolutional classifier with a residual soft-attention
//! block.

mod config;
mod network;

pub use config::{ConvSpec, FilterShape, LayerId, MaskMode, MaskSpec, NetworkConfig, ShapeWalk};
pub use network::{
    attention_apply, mask_branch, AttentionOutput, AttentionVars, ForwardPass, MaskParams,
    PhonationNet,
};

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{layer}: filter {freq}×{time} is not frequency-biased (need time < freq)")]
    FrequencyBias { layer: String, freq: usize, time: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
