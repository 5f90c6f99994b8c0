//! 2-D cross-correlation over `(batch, channel, frequency, time)` tensors,
//! lowered to one GEMM per call through a batched im2col buffer.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm, MatRef};
use super::TensorError;

/// Zero padding and stride along the (frequency, time) axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dParams {
    pub padding: (usize, usize),
    pub stride: (usize, usize),
}

impl Default for Conv2dParams {
    fn default() -> Self {
        Self {
            padding: (0, 0),
            stride: (1, 1),
        }
    }
}

impl Conv2dParams {
    pub fn padded(padding: (usize, usize)) -> Self {
        Self {
            padding,
            stride: (1, 1),
        }
    }
}

/// Output length along one axis; errors when the kernel does not tile the
/// padded input exactly.
pub fn conv_output_extent(
    len: usize,
    pad: usize,
    kernel: usize,
    stride: usize,
) -> Result<usize, TensorError> {
    let padded = len + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return Err(TensorError::KernelDoesNotFit {
            input: len,
            padding: pad,
            kernel,
        });
    }
    let span = padded - kernel;
    if span % stride != 0 {
        return Err(TensorError::NonIntegerOutput {
            input: len,
            padding: pad,
            kernel,
            stride,
        });
    }
    Ok(span / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        bias: &[usize],
        params: Conv2dParams,
    ) -> Result<Self, TensorError> {
        let (batch, in_channels, height, width) = match *input {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(TensorError::shape("conv2d input", "[N, C, H, W]", input)),
        };
        let (out_channels, kc, kernel_h, kernel_w) = match *kernel {
            [a, b, c, d] => (a, b, c, d),
            _ => return Err(TensorError::shape("conv2d kernel", "[K, C, n, m]", kernel)),
        };
        if kc != in_channels {
            return Err(TensorError::shape(
                "conv2d kernel",
                &format!("[K, {in_channels}, n, m]"),
                kernel,
            ));
        }
        if bias != [out_channels] {
            return Err(TensorError::shape(
                "conv2d bias",
                &format!("[{out_channels}]"),
                bias,
            ));
        }
        let out_h = conv_output_extent(height, params.padding.0, kernel_h, params.stride.0)?;
        let out_w = conv_output_extent(width, params.padding.1, kernel_w, params.stride.1)?;
        Ok(Self {
            batch,
            in_channels,
            height,
            width,
            out_channels,
            kernel_h,
            kernel_w,
            pad_h: params.padding.0,
            pad_w: params.padding.1,
            stride_h: params.stride.0,
            stride_w: params.stride.1,
            out_h,
            out_w,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.out_h, self.out_w]
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Output columns `lo..hi` whose tap `j` lands inside the input row, for
    /// unit horizontal stride.
    fn valid_columns(&self, j: usize) -> (usize, usize) {
        let lo = self.pad_w.saturating_sub(j).min(self.out_w);
        let hi = (self.width + self.pad_w).saturating_sub(j).min(self.out_w).max(lo);
        (lo, hi)
    }

    /// Input index along one axis for output position `o` and kernel tap `t`.
    #[inline]
    fn source(o: usize, t: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        let s = (o * stride + t).checked_sub(pad)?;
        (s < len).then_some(s)
    }
}

/// `[C·n·m, H'·W']` patch matrix of one sample, written into `out`.
pub(crate) fn im2col(sample: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let cols = g.positions();
    let plane = g.height * g.width;
    for c in 0..g.in_channels {
        let src = &sample[c * plane..][..plane];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = (c * g.kernel_h + i) * g.kernel_w + j;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for y in 0..g.out_h {
                    let dst = &mut dst_row[y * g.out_w..(y + 1) * g.out_w];
                    let Some(sy) = ConvGeometry::source(y, i, g.stride_h, g.pad_h, g.height) else {
                        dst.fill(0.0);
                        continue;
                    };
                    let line = &src[sy * g.width..(sy + 1) * g.width];
                    if g.stride_w == 1 {
                        let (lo, hi) = g.valid_columns(j);
                        dst[..lo].fill(0.0);
                        dst[hi..].fill(0.0);
                        dst[lo..hi].copy_from_slice(&line[lo + j - g.pad_w..hi + j - g.pad_w]);
                        continue;
                    }
                    for (x, d) in dst.iter_mut().enumerate() {
                        *d = ConvGeometry::source(x, j, g.stride_w, g.pad_w, g.width).map_or(0.0, |sx| line[sx]);
                    }
                }
            }
        }
    }
}

/// Scatter-add of one sample's patch matrix onto its input grid (adjoint of
/// `im2col`).
pub(crate) fn col2im(cols_data: &[f64], g: &ConvGeometry, out: &mut [f64]) {
    let cols = g.positions();
    let plane = g.height * g.width;
    for c in 0..g.in_channels {
        let dst = &mut out[c * plane..][..plane];
        for i in 0..g.kernel_h {
            for j in 0..g.kernel_w {
                let row = (c * g.kernel_h + i) * g.kernel_w + j;
                let src_row = &cols_data[row * cols..(row + 1) * cols];
                for y in 0..g.out_h {
                    let Some(sy) = ConvGeometry::source(y, i, g.stride_h, g.pad_h, g.height) else {
                        continue;
                    };
                    let src = &src_row[y * g.out_w..(y + 1) * g.out_w];
                    let line = &mut dst[sy * g.width..(sy + 1) * g.width];
                    if g.stride_w == 1 {
                        let (lo, hi) = g.valid_columns(j);
                        for (d, v) in line[lo + j - g.pad_w..hi + j - g.pad_w].iter_mut().zip(&src[lo..hi]) {
                            *d += v;
                        }
                        continue;
                    }
                    for (x, v) in src.iter().enumerate() {
                        if let Some(sx) = ConvGeometry::source(x, j, g.stride_w, g.pad_w, g.width) {
                            line[sx] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Output `[N, K, H', W']`. Patch matrices are built one sample at a time so
/// they stay cache-sized; backward rebuilds them instead of storing them.
pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let p = g.positions();
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * p;
    let mut cols = vec![0.0; g.patch_len() * p];
    let mut out = vec![0.0; g.batch * out_len];
    let k_mat = MatRef::new(kernel, g.out_channels, g.patch_len());
    for (b, dst) in out.chunks_exact_mut(out_len).enumerate() {
        im2col(&input[b * in_len..][..in_len], g, &mut cols);
        gemm(k_mat, false, MatRef::new(&cols, g.patch_len(), p), false, dst, 0.0);
        for (row, &bk) in dst.chunks_exact_mut(p).zip(bias) {
            row.iter_mut().for_each(|v| *v += bk);
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    upstream: &[f64],
    input: &[f64],
    kernel: &[f64],
    g: &ConvGeometry,
    need: [bool; 3],
) -> ConvGrads {
    let p = g.positions();
    let in_len = g.in_channels * g.height * g.width;
    let out_len = g.out_channels * p;
    let k_mat = MatRef::new(kernel, g.out_channels, g.patch_len());
    let mut d_input = need[0].then(|| vec![0.0; g.batch * in_len]);
    let mut d_kernel = need[1].then(|| vec![0.0; g.out_channels * g.patch_len()]);
    let mut cols = vec![0.0; g.patch_len() * p];
    for b in 0..g.batch {
        let d_out = MatRef::new(&upstream[b * out_len..][..out_len], g.out_channels, p);
        if let Some(dx) = d_input.as_mut() {
            gemm(k_mat, true, d_out, false, &mut cols, 0.0);
            col2im(&cols, g, &mut dx[b * in_len..][..in_len]);
        }
        if let Some(dk) = d_kernel.as_mut() {
            im2col(&input[b * in_len..][..in_len], g, &mut cols);
            gemm(d_out, false, MatRef::new(&cols, g.patch_len(), p), true, dk, 1.0);
        }
    }
    let bias = need[2].then(|| {
        let mut db = vec![0.0; g.out_channels];
        for sample in upstream.chunks_exact(out_len) {
            for (d, row) in db.iter_mut().zip(sample.chunks_exact(p)) {
                *d += row.iter().sum::<f64>();
            }
        }
        db
    });
    ConvGrads {
        input: d_input,
        kernel: d_kernel,
        bias,
    }
}
