//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each primitive as it executes. Calling
//! [`Tape::backward`] walks the record in reverse and accumulates gradients
//! for every node that depends on a leaf created with `requires_grad`.
//! Spatial tensors use the `(batch, channel, frequency, time)` layout.

mod adam;
mod conv;
pub mod gradcheck;
pub(crate) mod linalg;
mod pool;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{conv_output_extent, Conv2dParams};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
pub use pool::{align_corners_taps, bilinear_resize, PoolParams};
pub use tape::{softmax_rows, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: expected shape {expected}, got {got:?}")]
    ShapeMismatch {
        op: String,
        expected: String,
        got: Vec<usize>,
    },
    #[error("kernel of size {kernel} does not fit input of size {input} with padding {padding}")]
    KernelDoesNotFit {
        input: usize,
        padding: usize,
        kernel: usize,
    },
    #[error(
        "output size is not an integer: input {input}, padding {padding}, kernel {kernel}, stride {stride}"
    )]
    NonIntegerOutput {
        input: usize,
        padding: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("pool window {window:?} larger than input {input:?}")]
    PoolWindow {
        window: (usize, usize),
        input: (usize, usize),
    },
    #[error("bilinear upsampling cannot shrink {from:?} to {to:?}")]
    Downscale {
        from: (usize, usize),
        to: (usize, usize),
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("index {index} out of range for tensor of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss does not depend on any tensor that requires grad")]
    Detached,
}

impl TensorError {
    pub(crate) fn shape(op: &str, expected: &str, got: &[usize]) -> Self {
        Self::ShapeMismatch {
            op: op.to_string(),
            expected: expected.to_string(),
            got: got.to_vec(),
        }
    }
}
