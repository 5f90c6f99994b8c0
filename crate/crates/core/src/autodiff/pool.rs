//! Max pooling and align-corners bilinear upsampling kernels.

use serde::{Deserialize, Serialize};

use super::TensorError;

/// Pooling window and stride along (frequency, time).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolParams {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl PoolParams {
    pub fn square(size: usize) -> Self {
        Self {
            window: (size, size),
            stride: (size, size),
        }
    }

    pub fn output_extent(&self, height: usize, width: usize) -> Result<(usize, usize), TensorError> {
        let (wh, ww) = self.window;
        if wh == 0 || ww == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(TensorError::PoolWindow {
                window: self.window,
                input: (height, width),
            });
        }
        if wh > height || ww > width {
            return Err(TensorError::PoolWindow {
                window: self.window,
                input: (height, width),
            });
        }
        Ok((
            (height - wh) / self.stride.0 + 1,
            (width - ww) / self.stride.1 + 1,
        ))
    }
}

/// Pooled values, the flat input index behind each, and the output shape.
type PoolOutput = (Vec<f64>, Vec<usize>, [usize; 4]);

/// Per-window maxima plus the flat input index that produced each one.
/// Ties resolve to the first element in row-major order.
pub(crate) fn maxpool_forward(
    input: &[f64],
    dims: (usize, usize, usize, usize),
    params: PoolParams,
) -> Result<PoolOutput, TensorError> {
    let (n, c, h, w) = dims;
    let (oh, ow) = params.output_extent(h, w)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let y0 = y * params.stride.0;
                let x0 = x * params.stride.1;
                let mut best = base + y0 * w + x0;
                for dy in 0..params.window.0 {
                    for dx in 0..params.window.1 {
                        let idx = base + (y0 + dy) * w + x0 + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input[best]);
                argmax.push(best);
            }
        }
    }
    Ok((out, argmax, [n, c, oh, ow]))
}

pub(crate) fn maxpool_backward(upstream: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut grad = vec![0.0; input_len];
    for (g, &idx) in upstream.iter().zip(argmax) {
        grad[idx] += g;
    }
    grad
}

/// Align-corners source coordinates for one axis: `(lower, upper, frac)` per
/// destination index.
pub fn align_corners_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = i as f64 * (src - 1) as f64 / (dst - 1) as f64;
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear (align-corners) resize of each `h × w` plane to `out_h × out_w`.
pub fn bilinear_resize(
    planes: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let rows = align_corners_taps(h, out_h);
    let cols = align_corners_taps(w, out_w);
    let n_planes = planes.len() / (h * w);
    let mut out = Vec::with_capacity(n_planes * out_h * out_w);
    for plane in planes.chunks_exact(h * w) {
        for &(y0, y1, ty) in &rows {
            for &(x0, x1, tx) in &cols {
                let a = plane[y0 * w + x0];
                let b = plane[y0 * w + x1];
                let c = plane[y1 * w + x0];
                let d = plane[y1 * w + x1];
                let top = a + (b - a) * tx;
                let bottom = c + (d - c) * tx;
                out.push(top + (bottom - top) * ty);
            }
        }
    }
    out
}

/// Transpose of `bilinear_resize`.
pub(crate) fn bilinear_resize_backward(
    upstream: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let rows = align_corners_taps(h, out_h);
    let cols = align_corners_taps(w, out_w);
    let n_planes = upstream.len() / (out_h * out_w);
    let mut grad = vec![0.0; n_planes * h * w];
    for (plane, up) in grad
        .chunks_exact_mut(h * w)
        .zip(upstream.chunks_exact(out_h * out_w))
    {
        for (yi, &(y0, y1, ty)) in rows.iter().enumerate() {
            for (xi, &(x0, x1, tx)) in cols.iter().enumerate() {
                let g = up[yi * out_w + xi];
                plane[y0 * w + x0] += g * (1.0 - ty) * (1.0 - tx);
                plane[y0 * w + x1] += g * (1.0 - ty) * tx;
                plane[y1 * w + x0] += g * ty * (1.0 - tx);
                plane[y1 * w + x1] += g * ty * tx;
            }
        }
    }
    grad
}
