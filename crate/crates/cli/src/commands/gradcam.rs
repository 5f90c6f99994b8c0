use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use phonation::audio::{read_wav, FeatureExtractor, MelSpectrogram};
use phonation::autodiff::Tensor;
use phonation::dataset::{segment_for_test, PhonationMode};
use phonation::gradcam::{export_image, grad_cam, heatmap_file_stem, overlay_and_upsample};
use phonation::model::LayerId;
use phonation::training::CheckpointRecord;

use super::ensure_dir;
use crate::config::RunConfig;

#[derive(Clone, Debug, Args)]
pub struct GradcamArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Target phonation mode: breathy, neutral, flow, or pressed.
    #[arg(long = "class")]
    pub class: PhonationMode,
    /// Conv layer to visualise (repeatable); all four when omitted.
    #[arg(long = "layer")]
    pub layers: Vec<LayerId>,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature and overlay settings; normally the training run's run_config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Writes one heatmap per requested layer for the centred window of
/// `input` and returns the files written.
pub fn cmd_gradcam(args: &GradcamArgs) -> Result<Vec<PathBuf>> {
    let config = RunConfig::load(args.config.as_deref())?.finalize()?;
    let record = CheckpointRecord::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let audio = read_wav(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let clip = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".into());
    let spec = FeatureExtractor::new(config.features.clone())?.extract(&audio, &clip)?;
    let segment = segment_for_test(&spec, args.class, &config.segments)?;
    let [c, bands, frames] = record.network.input;
    if (segment.bands, segment.frames) != (bands, frames) {
        bail!(
            "checkpoint expects {bands}×{frames} inputs but the configuration yields {}×{}",
            segment.bands,
            segment.frames
        );
    }
    let input = Tensor::new(&[1, c, bands, frames], segment.values.clone())?;
    let underlay = MelSpectrogram {
        n_bands: bands,
        frames,
        values: segment.values,
        frame_hop_seconds: spec.frame_hop_seconds,
        source_id: clip.clone(),
    };
    let layers = if args.layers.is_empty() {
        LayerId::ALL.to_vec()
    } else {
        args.layers.clone()
    };
    ensure_dir(&args.out)?;
    let mut written = Vec::new();
    for layer in layers {
        let map = grad_cam(&record.net, &input, args.class.index(), layer, &clip)?;
        let image = overlay_and_upsample(&map, Some(&underlay), &config.overlay)?;
        let stem = heatmap_file_stem(&clip, args.class.name(), layer.name());
        written.extend(export_image(&image, &args.out, &stem)?);
    }
    config.write_to_dir(&args.out)?;
    Ok(written)
}
