use super::conv::{conv2d_backward, conv2d_forward, Conv2dParams, ConvGeometry};
use super::linalg::{gemm, MatRef};
use super::pool::{
    bilinear_resize, bilinear_resize_backward, maxpool_backward, maxpool_forward, PoolParams,
};
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geometry: ConvGeometry,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Upsample {
        input: Var,
        from: (usize, usize),
        to: (usize, usize),
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Gate {
        trunk: Var,
        mask: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Reshape(Var),
    Pick {
        input: Var,
        index: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed primitives. Nodes are appended as operations
/// run, so the node list is always in topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn check_finite(op: &str, t: &Tensor) {
    debug_assert!(t.is_finite(), "{op} produced a non-finite value");
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        check_finite("leaf", &value);
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last backward pass, if `v` took part in it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Side of every non-smooth point the recorded values fall on: one bit
    /// per ReLU input (`> 0`) and the argmax of every max-pool window. Two
    /// runs of one program with equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<u64> {
        let mut words = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for chunk in self.value(*x).data().chunks(64) {
                        words.push(
                            chunk
                                .iter()
                                .enumerate()
                                .fold(0u64, |w, (b, &v)| w | (u64::from(v > 0.0) << b)),
                        );
                    }
                }
                Op::MaxPool { argmax, .. } => words.extend(argmax.iter().map(|&a| a as u64)),
                _ => {}
            }
        }
        words
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, name: &str, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        check_finite(name, &value);
        let rg = self.any_grad(inputs);
        self.push(value, op, rg)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        params: Conv2dParams,
    ) -> Result<Var, TensorError> {
        let geometry = ConvGeometry::new(
            self.value(input).shape(),
            self.value(kernel).shape(),
            self.value(bias).shape(),
            params,
        )?;
        let out = conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &geometry,
        );
        let value = Tensor::new(&geometry.output_shape(), out)?;
        Ok(self.record(
            "conv2d",
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
            },
            &[input, kernel, bias],
        ))
    }

    pub fn maxpool2d(&mut self, input: Var, params: PoolParams) -> Result<Var, TensorError> {
        let x = self.value(input);
        let dims = x
            .dims4()
            .ok_or_else(|| TensorError::shape("maxpool2d input", "[N, C, H, W]", x.shape()))?;
        let (out, argmax, shape) = maxpool_forward(x.data(), dims, params)?;
        let value = Tensor::new(&shape, out)?;
        Ok(self.record("maxpool2d", value, Op::MaxPool { input, argmax }, &[input]))
    }

    /// Align-corners bilinear upsampling of the two spatial axes.
    pub fn upsample_bilinear(&mut self, input: Var, target: (usize, usize)) -> Result<Var, TensorError> {
        let x = self.value(input);
        let (n, c, h, w) = x
            .dims4()
            .ok_or_else(|| TensorError::shape("upsample input", "[N, C, h, w]", x.shape()))?;
        if target.0 < h || target.1 < w {
            return Err(TensorError::Downscale {
                from: (h, w),
                to: target,
            });
        }
        let out = bilinear_resize(x.data(), h, w, target.0, target.1);
        let value = Tensor::new(&[n, c, target.0, target.1], out)?;
        Ok(self.record(
            "upsample",
            value,
            Op::Upsample {
                input,
                from: (h, w),
                to: target,
            },
            &[input],
        ))
    }

    /// `input [N, D] · weight [D, O] + bias [O]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let (n, d) = x
            .dims2()
            .ok_or_else(|| TensorError::shape("dense input", "[N, D]", x.shape()))?;
        let (wd, o) = match w.dims2() {
            Some((wd, o)) if wd == d => (wd, o),
            _ => return Err(TensorError::shape("dense weight", &format!("[{d}, O]"), w.shape())),
        };
        if b.shape() != [o] {
            return Err(TensorError::shape("dense bias", &format!("[{o}]"), b.shape()));
        }
        let mut out = vec![0.0; n * o];
        for row in out.chunks_exact_mut(o) {
            row.copy_from_slice(b.data());
        }
        gemm(
            MatRef::new(x.data(), n, d),
            false,
            MatRef::new(w.data(), wd, o),
            false,
            &mut out,
            1.0,
        );
        let value = Tensor::new(&[n, o], out)?;
        Ok(self.record(
            "dense",
            value,
            Op::Dense {
                input,
                weight,
                bias,
            },
            &[input, weight, bias],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| src.data()[i].max(0.0));
        self.record("relu", value, Op::Relu(x), &[x])
    }

    /// Logistic function; results are kept inside the open interval (0, 1)
    /// even where `f64` rounding would otherwise saturate.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let value = Tensor::from_fn(src.shape(), |i| sigmoid(src.data()[i]));
        self.record("sigmoid", value, Op::Sigmoid(x), &[x])
    }

    /// Residual attention gating `(1 + mask) ⊙ trunk`.
    pub fn gate(&mut self, trunk: Var, mask: Var) -> Result<Var, TensorError> {
        let t = self.value(trunk);
        let m = self.value(mask);
        if t.shape() != m.shape() {
            return Err(TensorError::shape("gate mask", &format!("{:?}", t.shape()), m.shape()));
        }
        let value = Tensor::from_fn(t.shape(), |i| (1.0 + m.data()[i]) * t.data()[i]);
        Ok(self.record("gate", value, Op::Gate { trunk, mask }, &[trunk, mask]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(TensorError::shape("add", &format!("{:?}", x.shape()), y.shape()));
        }
        let value = Tensor::from_fn(x.shape(), |i| x.data()[i] + y.data()[i]);
        Ok(self.record("add", value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(TensorError::shape("mul", &format!("{:?}", x.shape()), y.shape()));
        }
        let value = Tensor::from_fn(x.shape(), |i| x.data()[i] * y.data()[i]);
        Ok(self.record("mul", value, Op::Mul(a, b), &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.record("sum", value, Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.record("reshape", value, Op::Reshape(x), &[x]))
    }

    /// Collapse every axis after the first: `[N, ...] -> [N, D]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.value(x).shape();
        let n = shape.first().copied().unwrap_or(1);
        let d = shape.iter().skip(1).product();
        self.reshape(x, &[n, d])
    }

    /// One element (by flat index) as a scalar node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, TensorError> {
        let src = self.value(x);
        let v = *src.data().get(index).ok_or(TensorError::IndexOutOfRange {
            index,
            len: src.len(),
        })?;
        Ok(self.record("pick", Tensor::scalar(v), Op::Pick { input: x, index }, &[x]))
    }

    /// Mean softmax cross-entropy of `logits [N, C]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        let z = self.value(logits);
        let (n, c) = z
            .dims2()
            .ok_or_else(|| TensorError::shape("cross-entropy logits", "[N, C]", z.shape()))?;
        if labels.len() != n {
            return Err(TensorError::shape(
                "cross-entropy labels",
                &format!("[{n}]"),
                &[labels.len()],
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(TensorError::LabelOutOfRange { label: bad, classes: c });
        }
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for (r, (row, p)) in z.data().chunks_exact(c).zip(probs.chunks_exact_mut(c)).enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (pi, &zi) in p.iter_mut().zip(row) {
                *pi = (zi - max).exp();
                total += *pi;
            }
            for pi in p.iter_mut() {
                *pi /= total;
            }
            loss += max + total.ln() - row[labels[r]];
        }
        let value = Tensor::scalar(loss / n as f64);
        Ok(self.record(
            "cross-entropy",
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        self.backward_from(loss, Tensor::full(&shape, 1.0))
    }

    /// Reverse-mode sweep seeded with an arbitrary upstream gradient for `root`.
    ///
    /// Afterwards every node that requires grad and feeds `root` holds a
    /// gradient; leaves that require grad but do not feed `root` get zeros.
    pub fn backward_from(&mut self, root: Var, seed: Tensor) -> Result<(), TensorError> {
        if root.0 >= self.nodes.len() {
            return Err(TensorError::Detached);
        }
        if !self.nodes[root.0].requires_grad {
            return Err(TensorError::Detached);
        }
        if seed.shape() != self.value(root).shape() {
            return Err(TensorError::shape(
                "backward seed",
                &format!("{:?}", self.value(root).shape()),
                seed.shape(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.propagate(i, &upstream, &mut grads);
            }
            grads[i] = Some(upstream);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && g.is_none() {
                *g = Some(Tensor::zeros(node.value.shape()));
            }
        }
        debug_assert!(grads.iter().flatten().all(Tensor::is_finite), "non-finite gradient");
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let shape = self.nodes[v.0].value.shape();
        let t = Tensor::new(shape, data).expect("gradient shape matches value shape");
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        }
    }

    fn propagate(&self, i: usize, upstream: &Tensor, grads: &mut [Option<Tensor>]) {
        let g = upstream.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
            } => {
                let need = [
                    self.requires_grad(*input),
                    self.requires_grad(*kernel),
                    self.requires_grad(*bias),
                ];
                let out = conv2d_backward(
                    g,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    geometry,
                    need,
                );
                if let Some(d) = out.input {
                    self.accumulate(grads, *input, d);
                }
                if let Some(d) = out.kernel {
                    self.accumulate(grads, *kernel, d);
                }
                if let Some(d) = out.bias {
                    self.accumulate(grads, *bias, d);
                }
            }
            Op::MaxPool { input, argmax } => {
                let d = maxpool_backward(g, argmax, self.value(*input).len());
                self.accumulate(grads, *input, d);
            }
            Op::Upsample { input, from, to } => {
                let d = bilinear_resize_backward(g, from.0, from.1, to.0, to.1);
                self.accumulate(grads, *input, d);
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (n, d) = x.dims2().expect("dense input is 2-D");
                let o = w.shape()[1];
                let up = MatRef::new(g, n, o);
                if self.requires_grad(*input) {
                    let mut dx = vec![0.0; n * d];
                    gemm(up, false, MatRef::new(w.data(), d, o), true, &mut dx, 0.0);
                    self.accumulate(grads, *input, dx);
                }
                if self.requires_grad(*weight) {
                    let mut dw = vec![0.0; d * o];
                    gemm(MatRef::new(x.data(), n, d), true, up, false, &mut dw, 0.0);
                    self.accumulate(grads, *weight, dw);
                }
                if self.requires_grad(*bias) {
                    let mut db = vec![0.0; o];
                    for row in g.chunks_exact(o) {
                        for (a, b) in db.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Relu(x) => {
                let src = self.value(*x).data();
                let d = g
                    .iter()
                    .zip(src)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let s = self.nodes[i].value.data();
                let d = g.iter().zip(s).map(|(&gi, &si)| gi * si * (1.0 - si)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::Gate { trunk, mask } => {
                let t = self.value(*trunk).data();
                let m = self.value(*mask).data();
                if self.requires_grad(*trunk) {
                    let d = g.iter().zip(m).map(|(&gi, &mi)| gi * (1.0 + mi)).collect();
                    self.accumulate(grads, *trunk, d);
                }
                if self.requires_grad(*mask) {
                    let d = g.iter().zip(t).map(|(&gi, &ti)| gi * ti).collect();
                    self.accumulate(grads, *mask, d);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let x = self.value(*a).data();
                let y = self.value(*b).data();
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.iter().zip(y).map(|(gi, yi)| gi * yi).collect());
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.iter().zip(x).map(|(gi, xi)| gi * xi).collect());
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, g.to_vec());
            }
            Op::Pick { input, index } => {
                let mut d = vec![0.0; self.value(*input).len()];
                d[*index] = g[0];
                self.accumulate(grads, *input, d);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = labels.len();
                let c = probs.len() / n;
                let scale = g[0] / n as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    d[r * c + l] -= scale;
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // largest f64 below 1.0
    const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;
    s.clamp(f64::MIN_POSITIVE, ONE_MINUS)
}

/// Row-wise softmax of a `[N, C]` tensor.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor, TensorError> {
    let (_, c) = logits
        .dims2()
        .ok_or_else(|| TensorError::shape("softmax", "[N, C]", logits.shape()))?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::new(logits.shape(), out)
}
