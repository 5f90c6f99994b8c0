use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{LayerId, MaskMode, MaskSpec, NetworkConfig};
use super::ModelError;
use crate::autodiff::{Conv2dParams, Tape, Tensor, TensorError, Var};

/// Largest batch pushed through one tape during inference.
const INFERENCE_CHUNK: usize = 128;

/// The four-conv, two-dense classifier with a residual soft-attention block
/// over conv3 and conv4.
#[derive(Clone, Debug, PartialEq)]
pub struct PhonationNet {
    config: NetworkConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Tape handles for one attention-gated layer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub layer: LayerId,
    pub trunk: Var,
    pub mask: Var,
    pub gated: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub layer: LayerId,
    pub trunk: Tensor,
    pub mask: Tensor,
    pub gated: Tensor,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// One handle per parameter tensor, in storage order.
    pub params: Vec<Var>,
    pub logits: Var,
    /// Post-activation output of each trunk conv layer: ReLU output for
    /// conv1 and conv2, attention-gated output for conv3 and conv4.
    pub activations: [Var; 4],
    /// Empty when attention is disabled.
    pub attention: Vec<AttentionVars>,
}

impl ForwardPass {
    pub fn activation(&self, layer: LayerId) -> Var {
        self.activations[layer.index()]
    }
}

/// Residual attention `(1 + mask) ⊙ trunk`.
pub fn attention_apply(tape: &mut Tape, trunk: Var, mask: Var) -> Result<Var, ModelError> {
    Ok(tape.gate(trunk, mask)?)
}

/// Handles of one mask branch's parameters.
#[derive(Clone, Copy, Debug)]
pub struct MaskParams {
    pub conv_weight: Var,
    pub conv_bias: Var,
    pub proj_weight: Var,
    pub proj_bias: Var,
}

/// Soft mask over `features`, upsampled back to their spatial size.
pub fn mask_branch(
    tape: &mut Tape,
    features: Var,
    spec: &MaskSpec,
    params: MaskParams,
) -> Result<Var, ModelError> {
    let shape = tape.value(features).shape().to_vec();
    let [_, _, h, w] = shape[..] else {
        return Err(TensorError::shape("mask features", "[N, C, H, W]", &shape).into());
    };
    let down = tape.maxpool2d(features, spec.pool)?;
    let c = tape.conv2d(
        down,
        params.conv_weight,
        params.conv_bias,
        Conv2dParams::padded(spec.conv.padding),
    )?;
    let c = tape.relu(c);
    let up = tape.upsample_bilinear(c, (h, w))?;
    let logits = tape.conv2d(up, params.proj_weight, params.proj_bias, Conv2dParams::default())?;
    Ok(tape.sigmoid(logits))
}

impl PhonationNet {
    /// He-uniform weights and zero biases drawn from `config.seed`.
    pub fn build(config: NetworkConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = config.parameter_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::with_capacity(shapes.len());
        let mut params = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let tensor = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                // conv weights are [O, C, kh, kw]; dense weights are [D, O]
                let fan_in: usize = if shape.len() == 4 { shape[1..].iter().product() } else { shape[0] };
                let bound = (6.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.gen_range(-bound..bound))
            };
            names.push(name);
            params.push(tensor);
        }
        Ok(Self { config, names, params })
    }

    /// Rebuilds a network from named tensors, checking every shape.
    pub fn from_parameters(config: NetworkConfig, named: Vec<(String, Tensor)>) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = config.parameter_shapes()?;
        if named.len() != shapes.len() {
            return Err(ModelError::InvalidShape(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(shapes.len());
        let mut params = Vec::with_capacity(shapes.len());
        for ((want_name, want_shape), (name, tensor)) in shapes.into_iter().zip(named) {
            if name != want_name || tensor.shape() != want_shape.as_slice() {
                return Err(ModelError::InvalidShape(format!(
                    "parameter {name} {:?} does not match {want_name} {want_shape:?}",
                    tensor.shape()
                )));
            }
            names.push(name);
            params.push(tensor);
        }
        Ok(Self { config, names, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.params[i])
    }

    /// Adds every parameter to `tape` as a leaf.
    pub fn register(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone(), requires_grad))
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), ModelError> {
        let [c, h, w] = self.config.input;
        match shape {
            [n, sc, sh, sw] if *n > 0 && [*sc, *sh, *sw] == [c, h, w] => Ok(()),
            _ => Err(ModelError::InvalidShape(format!(
                "input batch {shape:?} does not match [N, {c}, {h}, {w}]"
            ))),
        }
    }

    /// Registers parameters with gradients enabled and runs the forward pass.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<ForwardPass, ModelError> {
        let params = self.register(tape, true);
        self.forward_with(tape, input, &params)
    }

    /// Forward pass using caller-supplied parameter handles, which must
    /// follow [`Self::parameter_names`] order.
    pub fn forward_with(&self, tape: &mut Tape, input: Var, params: &[Var]) -> Result<ForwardPass, ModelError> {
        self.check_input(tape.value(input).shape())?;
        if params.len() != self.params.len() {
            return Err(ModelError::InvalidShape(format!(
                "expected {} parameter handles, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let p = |name: &str| params[self.index_of(name).expect("parameter registered by config")];
        let cfg = &self.config;
        let conv = |tape: &mut Tape, x: Var, i: usize| -> Result<Var, ModelError> {
            let name = format!("conv{}", i + 1);
            let y = tape.conv2d(
                x,
                p(&format!("{name}.weight")),
                p(&format!("{name}.bias")),
                Conv2dParams::padded(cfg.convs[i].padding),
            )?;
            Ok(tape.relu(y))
        };
        let branch = |tape: &mut Tape, x: Var, name: &str| {
            mask_branch(
                tape,
                x,
                &cfg.mask,
                MaskParams {
                    conv_weight: p(&format!("{name}.conv.weight")),
                    conv_bias: p(&format!("{name}.conv.bias")),
                    proj_weight: p(&format!("{name}.proj.weight")),
                    proj_bias: p(&format!("{name}.proj.bias")),
                },
            )
        };

        let a1 = conv(tape, input, 0)?;
        let x = tape.maxpool2d(a1, cfg.pools[0])?;
        let a2 = conv(tape, x, 1)?;
        let x3 = tape.maxpool2d(a2, cfg.pools[1])?;

        let mut attention = Vec::new();
        let t3 = conv(tape, x3, 2)?;
        let h3 = match cfg.mask.mode {
            MaskMode::Disabled => t3,
            MaskMode::Shared | MaskMode::PerLayer => {
                let name = if cfg.mask.mode == MaskMode::Shared { "mask" } else { "mask3" };
                let m = branch(tape, x3, name)?;
                let h = attention_apply(tape, t3, m)?;
                attention.push(AttentionVars { layer: LayerId::Conv3, trunk: t3, mask: m, gated: h });
                h
            }
        };
        let t4 = conv(tape, h3, 3)?;
        let h4 = match cfg.mask.mode {
            MaskMode::Disabled => t4,
            MaskMode::Shared => {
                let m = attention[0].mask;
                let h = attention_apply(tape, t4, m)?;
                attention.push(AttentionVars { layer: LayerId::Conv4, trunk: t4, mask: m, gated: h });
                h
            }
            MaskMode::PerLayer => {
                let m = branch(tape, h3, "mask4")?;
                let h = attention_apply(tape, t4, m)?;
                attention.push(AttentionVars { layer: LayerId::Conv4, trunk: t4, mask: m, gated: h });
                h
            }
        };

        let flat = tape.flatten(h4)?;
        let hidden = tape.dense(flat, p("dense1.weight"), p("dense1.bias"))?;
        let hidden = tape.relu(hidden);
        let logits = tape.dense(hidden, p("dense2.weight"), p("dense2.bias"))?;
        Ok(ForwardPass {
            params: params.to_vec(),
            logits,
            activations: [a1, a2, h3, h4],
            attention,
        })
    }

    /// Logits `[N, classes]` without recording gradients.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        self.check_input(batch.shape())?;
        let n = batch.shape()[0];
        let per: usize = self.config.input.iter().product();
        let mut logits = Vec::with_capacity(n * self.config.classes);
        for start in (0..n).step_by(INFERENCE_CHUNK) {
            let end = (start + INFERENCE_CHUNK).min(n);
            let mut shape = batch.shape().to_vec();
            shape[0] = end - start;
            let chunk = Tensor::new(&shape, batch.data()[start * per..end * per].to_vec())?;
            let mut tape = Tape::new();
            let x = tape.leaf(chunk, false);
            let params = self.register(&mut tape, false);
            let pass = self.forward_with(&mut tape, x, &params)?;
            logits.extend_from_slice(tape.value(pass.logits).data());
        }
        Ok(Tensor::new(&[n, self.config.classes], logits)?)
    }

    /// Trunk, mask, and gated tensors of each attention-gated layer.
    pub fn attention_outputs(&self, batch: &Tensor) -> Result<Vec<AttentionOutput>, ModelError> {
        let mut tape = Tape::new();
        let x = tape.leaf(batch.clone(), false);
        let params = self.register(&mut tape, false);
        let pass = self.forward_with(&mut tape, x, &params)?;
        Ok(pass
            .attention
            .iter()
            .map(|a| AttentionOutput {
                layer: a.layer,
                trunk: tape.value(a.trunk).clone(),
                mask: tape.value(a.mask).clone(),
                gated: tape.value(a.gated).clone(),
            })
            .collect())
    }
}
