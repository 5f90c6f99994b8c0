//! Run configuration resolved as defaults < `PHONATION_SEED` < config file
//! < command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use phonation::audio::FeatureConfig;
use phonation::dataset::{SegmentConfig, SynthConfig};
use phonation::gradcam::OverlayConfig;
use phonation::model::NetworkConfig;
use phonation::training::TrainConfig;

pub const SEED_ENV: &str = "PHONATION_SEED";
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; [`RunConfig::finalize`] copies it into every stage.
    pub seed: u64,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub segments: SegmentConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub folds: usize,
    /// Fraction of clips per mode held out as the test set.
    pub test_split: f64,
    /// Folds trained concurrently; 1 keeps everything on one thread.
    pub parallel_folds: usize,
    pub overlay: OverlayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            features: FeatureConfig::default(),
            segments: SegmentConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            folds: 10,
            test_split: 0.2,
            parallel_folds: 1,
            overlay: OverlayConfig::default(),
        }
    }
}

/// Recursively overwrites `base` with every field present in `over`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Defaults, then the seed environment variable, then `file` if given.
    /// Fields absent from the file keep their earlier values.
    pub fn load(file: Option<&Path>) -> Result<Self> {
        let mut config = Self::default();
        if let Ok(raw) = std::env::var(SEED_ENV) {
            config.seed = raw
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
        }
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let over: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            if !over.is_object() {
                bail!("config {} must hold a JSON object", path.display());
            }
            let mut merged = serde_json::to_value(&config)?;
            merge(&mut merged, over);
            config = serde_json::from_value(merged)
                .with_context(|| format!("config {}", path.display()))?;
        }
        Ok(config)
    }

    /// Propagates the master seed and checks cross-field constraints.
    pub fn finalize(mut self) -> Result<Self> {
        self.synth.seed = self.seed;
        self.network.seed = self.seed;
        self.train.seed = self.seed;
        if self.folds < 2 {
            bail!("at least 2 folds are required, got {}", self.folds);
        }
        if !(0.0..1.0).contains(&self.test_split) {
            bail!("test split {} must lie in [0, 1)", self.test_split);
        }
        if self.parallel_folds == 0 {
            bail!("parallel folds must be at least 1");
        }
        self.train.validate()?;
        Ok(self)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_CONFIG_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
