use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use phonation::audio::{read_wav, AudioError, FeatureExtractor};
use phonation::dataset::{
    load_manifest, segment_for_test, segment_for_training, split_train_test, DatasetError,
    PhonationMode, SegmentSet,
};

use super::{ensure_dir, TEST_SEGMENTS, TRAIN_SEGMENTS};
use crate::config::RunConfig;

#[derive(Clone, Debug, Default, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of each mode's clips held out for testing.
    #[arg(long)]
    pub test_split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts {
    pub train_clips: usize,
    pub train_segments: usize,
    pub test_clips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedClip {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub bands: usize,
    pub frames: usize,
    /// Indexed by [`PhonationMode::index`].
    pub per_mode: [ModeCounts; 4],
    pub skipped: Vec<SkippedClip>,
}

impl PreprocessSummary {
    pub fn totals(&self) -> ModeCounts {
        self.per_mode.iter().fold(ModeCounts::default(), |a, m| ModeCounts {
            train_clips: a.train_clips + m.train_clips,
            train_segments: a.train_segments + m.train_segments,
            test_clips: a.test_clips + m.test_clips,
        })
    }

    /// Original clip count against augmented segment count, per mode.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:>6} {:>9} {:>6}\n", "mode", "train", "augmented", "test");
        let row = |name: &str, c: &ModeCounts| {
            format!(
                "{name:<8} {:>6} {:>9} {:>6}\n",
                c.train_clips, c.train_segments, c.test_clips
            )
        };
        for mode in PhonationMode::ALL {
            out.push_str(&row(mode.name(), &self.per_mode[mode.index()]));
        }
        out.push_str(&row("total", &self.totals()));
        if !self.skipped.is_empty() {
            out.push_str(&format!("skipped {} clip(s)\n", self.skipped.len()));
        }
        out
    }
}

fn skip_reason(e: &DatasetError) -> Option<String> {
    match e {
        DatasetError::TooShort { .. } => Some(e.to_string()),
        DatasetError::Audio(AudioError::AllSilent | AudioError::TooShort { .. }) => Some(e.to_string()),
        _ => None,
    }
}

/// Decodes, resamples, trims, and segments every manifest row. Training
/// clips contribute all their windows, test clips only the centred one.
pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<PreprocessSummary> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.test_split {
        config.test_split = r;
    }
    let config = config.finalize()?;

    let clips = load_manifest(&args.manifest)
        .with_context(|| format!("reading manifest {}", args.manifest.display()))?;
    if clips.is_empty() {
        bail!("manifest {} lists no clips", args.manifest.display());
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let (train, test) = split_train_test(&clips, config.test_split, config.seed)?;
    let extractor = FeatureExtractor::new(config.features.clone())?;
    let frames = config.segments.frames(config.features.hop_seconds())?;
    let bands = config.features.n_bands;

    let mut train_set = SegmentSet::new(bands, frames.window);
    let mut test_set = SegmentSet::new(bands, frames.window);
    let mut summary = PreprocessSummary {
        bands,
        frames: frames.window,
        per_mode: [ModeCounts::default(); 4],
        skipped: Vec::new(),
    };
    let groups = [(&train, true), (&test, false)];
    for (group, is_train) in groups {
        for clip in group {
            let path = base.join(&clip.id);
            let audio = read_wav(&path).with_context(|| format!("reading {}", path.display()))?;
            let result = extractor
                .extract(&audio, &clip.id)
                .map_err(DatasetError::from)
                .and_then(|spec| {
                    if is_train {
                        let t = segment_for_training(&spec, clip.mode, &config.segments)?;
                        if t.segments.is_empty() {
                            return Err(DatasetError::TooShort {
                                frames: spec.frames,
                                needed: 2 * frames.trim + frames.window,
                            });
                        }
                        Ok(t.segments)
                    } else {
                        Ok(vec![segment_for_test(&spec, clip.mode, &config.segments)?])
                    }
                });
            match result {
                Ok(segments) => {
                    let counts = &mut summary.per_mode[clip.mode.index()];
                    if is_train {
                        counts.train_clips += 1;
                        counts.train_segments += segments.len();
                        for s in segments {
                            train_set.push(s)?;
                        }
                    } else {
                        counts.test_clips += 1;
                        test_set.push(segments.into_iter().next().expect("one test window"))?;
                    }
                }
                Err(e) => match skip_reason(&e) {
                    Some(reason) => summary.skipped.push(SkippedClip {
                        id: clip.id.clone(),
                        reason,
                    }),
                    None => return Err(e).with_context(|| format!("processing {}", clip.id)),
                },
            }
        }
    }
    if summary.skipped.len() == clips.len() {
        bail!("all {} clips were skipped", clips.len());
    }

    ensure_dir(&args.out)?;
    train_set.save(args.out.join(TRAIN_SEGMENTS))?;
    test_set.save(args.out.join(TEST_SEGMENTS))?;
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    config.write_to_dir(&args.out)?;
    Ok(summary)
}
