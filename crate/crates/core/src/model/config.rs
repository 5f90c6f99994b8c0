use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::{conv_output_extent, PoolParams};

/// Kernel extent along frequency (`freq`) and time (`time`). Trunk and mask
/// filters must be strictly taller than they are wide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterShape {
    pub freq: usize,
    pub time: usize,
}

impl FilterShape {
    pub fn new(freq: usize, time: usize) -> Result<Self, ModelError> {
        let shape = Self { freq, time };
        shape.validate("filter")?;
        Ok(shape)
    }

    fn validate(&self, layer: &str) -> Result<(), ModelError> {
        if self.time == 0 || self.freq == 0 || self.time >= self.freq {
            return Err(ModelError::FrequencyBias {
                layer: layer.to_string(),
                freq: self.freq,
                time: self.time,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filter: FilterShape,
    pub channels: usize,
    /// Zero padding along (frequency, time).
    pub padding: (usize, usize),
}

impl ConvSpec {
    /// Odd filter with padding that preserves the spatial size.
    pub fn same(freq: usize, time: usize, channels: usize) -> Self {
        Self {
            filter: FilterShape { freq, time },
            channels,
            padding: (freq / 2, time / 2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// One mask from the conv3 input gates both conv3 and conv4.
    Shared,
    /// conv3 and conv4 each get a branch computed from their own input.
    PerLayer,
    /// No attention; the block reduces to the plain trunk.
    Disabled,
}

/// Bottom-up/top-down soft mask: pool → conv → ReLU → bilinear upsample →
/// 1×1 projection → sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub pool: PoolParams,
    pub conv: ConvSpec,
    pub mode: MaskMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Per-sample input shape `[channels, bands, frames]`.
    pub input: [usize; 3],
    pub convs: [ConvSpec; 4],
    /// Applied after conv1 and conv2.
    pub pools: [PoolParams; 2],
    pub mask: MaskSpec,
    pub hidden: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input: [1, 128, 12],
            convs: [
                ConvSpec::same(5, 3, 16),
                ConvSpec::same(5, 3, 32),
                ConvSpec::same(5, 3, 64),
                ConvSpec::same(5, 3, 64),
            ],
            pools: [PoolParams::square(2); 2],
            mask: MaskSpec {
                pool: PoolParams::square(2),
                conv: ConvSpec::same(5, 3, 32),
                mode: MaskMode::Shared,
            },
            hidden: 128,
            classes: 4,
            seed: 0,
        }
    }
}

/// Trunk layers whose activations are exposed for inspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerId {
    Conv1,
    Conv2,
    Conv3,
    Conv4,
}

impl LayerId {
    pub const ALL: [LayerId; 4] = [Self::Conv1, Self::Conv2, Self::Conv3, Self::Conv4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["conv1", "conv2", "conv3", "conv4"][self.index()]
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown layer {s:?}")))
    }
}

/// Per-sample shapes along the forward path, as produced by
/// [`NetworkConfig::shape_walk`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeWalk {
    pub stages: Vec<(String, Vec<usize>)>,
}

impl ShapeWalk {
    pub fn get(&self, stage: &str) -> Option<&[usize]> {
        self.stages.iter().find(|(n, _)| n == stage).map(|(_, s)| s.as_slice())
    }
}

fn conv_out(name: &str, [c, h, w]: [usize; 3], spec: &ConvSpec) -> Result<[usize; 3], ModelError> {
    let extent = |len, pad, k| {
        conv_output_extent(len, pad, k, 1)
            .map_err(|e| ModelError::InvalidShape(format!("{name}: {e}")))
    };
    if c == 0 || spec.channels == 0 {
        return Err(ModelError::InvalidShape(format!("{name}: zero channels")));
    }
    Ok([
        spec.channels,
        extent(h, spec.padding.0, spec.filter.freq)?,
        extent(w, spec.padding.1, spec.filter.time)?,
    ])
}

fn pool_out(name: &str, [c, h, w]: [usize; 3], pool: &PoolParams) -> Result<[usize; 3], ModelError> {
    let (h, w) = pool
        .output_extent(h, w)
        .map_err(|e| ModelError::InvalidShape(format!("{name}: {e}")))?;
    Ok([c, h, w])
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, spec) in self.convs.iter().enumerate() {
            spec.filter.validate(&format!("conv{}", i + 1))?;
        }
        self.mask.conv.filter.validate("mask conv")?;
        if self.classes != 4 {
            return Err(ModelError::InvalidConfig(format!(
                "output layer must have 4 classes, got {}",
                self.classes
            )));
        }
        if self.hidden == 0 {
            return Err(ModelError::InvalidConfig("hidden width must be positive".into()));
        }
        if self.input[0] != 1 {
            return Err(ModelError::InvalidConfig("input must have a single channel".into()));
        }
        self.shape_walk().map(|_| ())
    }

    pub fn shape_walk(&self) -> Result<ShapeWalk, ModelError> {
        let mut stages = Vec::new();
        let mut push = |name: &str, s: [usize; 3]| stages.push((name.to_string(), s.to_vec()));
        let x = self.input;
        push("input", x);
        let x = conv_out("conv1", x, &self.convs[0])?;
        push("conv1", x);
        let x = pool_out("pool1", x, &self.pools[0])?;
        push("pool1", x);
        let x = conv_out("conv2", x, &self.convs[1])?;
        push("conv2", x);
        let x3 = pool_out("pool2", x, &self.pools[1])?;
        push("pool2", x3);
        let t3 = conv_out("conv3", x3, &self.convs[2])?;
        push("conv3", t3);
        let t4 = conv_out("conv4", t3, &self.convs[3])?;
        push("conv4", t4);
        if t4 != t3 {
            return Err(ModelError::InvalidShape(format!(
                "conv3 output {t3:?} and conv4 output {t4:?} must match for gating"
            )));
        }
        let mask_inputs: &[(&str, [usize; 3])] = match self.mask.mode {
            MaskMode::Shared => &[("mask", x3)],
            MaskMode::PerLayer => &[("mask3", x3), ("mask4", t3)],
            MaskMode::Disabled => &[],
        };
        for &(name, src) in mask_inputs {
            let p = pool_out(&format!("{name}.pool"), src, &self.mask.pool)?;
            push(&format!("{name}.pool"), p);
            let c = conv_out(&format!("{name}.conv"), p, &self.mask.conv)?;
            push(&format!("{name}.conv"), c);
            if c[1] > src[1] || c[2] > src[2] {
                return Err(ModelError::InvalidShape(format!("{name}: branch output larger than its input")));
            }
            push(&format!("{name}.upsample"), [c[0], src[1], src[2]]);
            if src[1] != t3[1] || src[2] != t3[2] {
                return Err(ModelError::InvalidShape(format!("{name}: input and trunk spatial sizes differ")));
            }
            push(&format!("{name}.out"), t3);
        }
        let flat = t4.iter().product::<usize>();
        stages.push(("flatten".into(), vec![flat]));
        stages.push(("dense1".into(), vec![self.hidden]));
        stages.push(("logits".into(), vec![self.classes]));
        Ok(ShapeWalk { stages })
    }

    /// Parameter names and shapes in storage order.
    pub fn parameter_shapes(&self) -> Result<Vec<(String, Vec<usize>)>, ModelError> {
        let walk = self.shape_walk()?;
        let mut out = Vec::new();
        let mut conv = |name: &str, spec: &ConvSpec, in_ch: usize| {
            out.push((
                format!("{name}.weight"),
                vec![spec.channels, in_ch, spec.filter.freq, spec.filter.time],
            ));
            out.push((format!("{name}.bias"), vec![spec.channels]));
        };
        let mut ch = self.input[0];
        for (i, spec) in self.convs.iter().enumerate() {
            conv(&format!("conv{}", i + 1), spec, ch);
            ch = spec.channels;
        }
        let x3_ch = self.convs[1].channels;
        let trunk_ch = self.convs[2].channels;
        let branches: &[(&str, usize)] = match self.mask.mode {
            MaskMode::Shared => &[("mask", x3_ch)],
            MaskMode::PerLayer => &[("mask3", x3_ch), ("mask4", trunk_ch)],
            MaskMode::Disabled => &[],
        };
        for &(name, in_ch) in branches {
            conv(&format!("{name}.conv"), &self.mask.conv, in_ch);
            let proj = ConvSpec {
                filter: FilterShape { freq: 1, time: 1 },
                channels: trunk_ch,
                padding: (0, 0),
            };
            conv(&format!("{name}.proj"), &proj, self.mask.conv.channels);
        }
        let flat = walk.get("flatten").expect("walk has flatten")[0];
        out.push(("dense1.weight".into(), vec![flat, self.hidden]));
        out.push(("dense1.bias".into(), vec![self.hidden]));
        out.push(("dense2.weight".into(), vec![self.hidden, self.classes]));
        out.push(("dense2.bias".into(), vec![self.classes]));
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize, ModelError> {
        Ok(self
            .parameter_shapes()?
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum())
    }
}
