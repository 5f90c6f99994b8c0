//! Gradient-weighted class activation maps.
//!
//! For a conv layer output `A` (`K` channels over an `H × W` grid) and a
//! target logit `y`, channel weights are `α_k = mean_{i,j} ∂y/∂A_k[i,j]` and
//! the map is `ReLU(Σ_k α_k A_k)`, rescaled so its maximum is 1. Gradients
//! are taken from the raw logit, before any softmax.

mod image;

pub use image::{
    encode_pgm, encode_ppm, export_image, heatmap_file_stem, overlay_and_upsample, Colormap,
    HeatmapImage, OverlayConfig,
};
#[cfg(feature = "png")]
pub use image::encode_png;

use thiserror::Error;

use crate::autodiff::{Tape, Tensor, TensorError};
use crate::model::{LayerId, ModelError, PhonationNet};

#[derive(Debug, Error)]
pub enum GradCamError {
    #[error("class {class} is out of range for a {classes}-class network")]
    InvalidClass { class: usize, classes: usize },
    #[error("unknown layer {0:?}")]
    InvalidLayer(String),
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("image has no pixels")]
    EmptyImage,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-negative `height × width` map, row 0 at the lowest frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub layer: LayerId,
    pub class: usize,
    pub source_id: String,
    /// `(bands, frames)` of the input the network processed.
    pub input: (usize, usize),
}

impl ActivationMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// `ReLU(Σ_k α_k A_k)` normalized to max 1, from one sample's activation
/// and its gradient, both `[1, K, H, W]`. Returns `(H, W, values)`. An
/// all-zero result is returned unscaled.
pub fn weighted_activation_map(
    activation: &Tensor,
    gradient: &Tensor,
) -> Result<(usize, usize, Vec<f64>), GradCamError> {
    let Some((n, _, h, w)) = activation.dims4() else {
        return Err(GradCamError::ShapeMismatch(format!(
            "activation must be [1, K, H, W], got {:?}",
            activation.shape()
        )));
    };
    if n != 1 || gradient.shape() != activation.shape() {
        return Err(GradCamError::ShapeMismatch(format!(
            "activation {:?} and gradient {:?} must be one matching sample",
            activation.shape(),
            gradient.shape()
        )));
    }
    let plane = h * w;
    let mut map = vec![0.0; plane];
    for (a, g) in activation.data().chunks_exact(plane).zip(gradient.data().chunks_exact(plane)) {
        let alpha = g.iter().sum::<f64>() / plane as f64;
        for (m, &v) in map.iter_mut().zip(a) {
            *m += alpha * v;
        }
    }
    for m in &mut map {
        *m = m.max(0.0);
    }
    let peak = map.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        // correctly rounded division keeps every ratio ≤ 1 and peak/peak = 1
        for m in &mut map {
            *m /= peak;
        }
    }
    Ok((h, w, map))
}

/// Grad-CAM of `layer` for `class` on one input `[1, 1, bands, frames]`.
pub fn grad_cam(
    net: &PhonationNet,
    input: &Tensor,
    class: usize,
    layer: LayerId,
    source_id: &str,
) -> Result<ActivationMap, GradCamError> {
    let classes = net.config().classes;
    if class >= classes {
        return Err(GradCamError::InvalidClass { class, classes });
    }
    let [c, bands, frames] = net.config().input;
    if input.shape() != [1, c, bands, frames] {
        return Err(GradCamError::ShapeMismatch(format!(
            "expected one input of shape [1, {c}, {bands}, {frames}], got {:?}",
            input.shape()
        )));
    }
    let mut tape = Tape::new();
    // gradients only need to reach activations, so parameters stay frozen
    let x = tape.leaf(input.clone(), true);
    let params = net.register(&mut tape, false);
    let pass = net.forward_with(&mut tape, x, &params)?;
    let target = tape.pick(pass.logits, class)?;
    tape.backward(target)?;
    let a = pass.activation(layer);
    let grad = tape.grad(a).expect("activation lies on the path to the logit");
    let (height, width, values) = weighted_activation_map(tape.value(a), grad)?;
    Ok(ActivationMap {
        height,
        width,
        values,
        layer,
        class,
        source_id: source_id.to_string(),
        input: (bands, frames),
    })
}

/// Parses a layer name such as `conv3`.
pub fn parse_layer(name: &str) -> Result<LayerId, GradCamError> {
    name.parse().map_err(|_| GradCamError::InvalidLayer(name.to_string()))
}
