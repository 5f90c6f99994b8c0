use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use phonation::dataset::{make_folds, LabeledClip, Segment, SegmentSet};
use phonation::training::{
    cross_validate, CheckpointRecord, ConfusionMatrix, EpochRecord, MetricsReport, TrainConfig,
};

use super::{checkpoint_name, ensure_dir, positive, REPORT_JSON, REPORT_TEXT, TEST_SEGMENTS, TRAIN_SEGMENTS};
use crate::config::RunConfig;

#[derive(Clone, Debug, Default, Args)]
pub struct TrainArgs {
    /// Directory written by `preprocess`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = positive)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Folds trained concurrently.
    #[arg(long, value_parser = positive)]
    pub parallel_folds: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub train_segments: usize,
    pub val_segments: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_clips: usize,
    pub train_segments: usize,
    pub test_segments: usize,
    pub metrics: MetricsReport,
    pub folds: Vec<FoldRecord>,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} training clips ({} segments), {} test segments\n",
            self.train_clips, self.train_segments, self.test_segments
        );
        out.push_str(&self.metrics.to_text());
        out
    }
}

/// Clips in first-appearance order, labelled by their segments.
fn clips_of(segments: &[Segment]) -> Vec<LabeledClip> {
    let mut seen = std::collections::HashSet::new();
    segments
        .iter()
        .filter(|s| seen.insert(s.origin.clip_id.as_str()))
        .map(|s| LabeledClip {
            id: s.origin.clip_id.clone(),
            mode: s.mode,
            pitch: None,
            vowel: None,
        })
        .collect()
}

pub fn format_confusion(cm: &ConfusionMatrix) -> String {
    use phonation::dataset::PhonationMode;
    let mut out = format!("{:<8}", "true\\pred");
    for m in PhonationMode::ALL {
        out.push_str(&format!(" {:>8}", m.name()));
    }
    out.push('\n');
    for t in PhonationMode::ALL {
        out.push_str(&format!("{:<9}", t.name()));
        for p in 0..4 {
            out.push_str(&format!(" {:>8}", cm.counts[t.index()][p]));
        }
        out.push('\n');
    }
    out
}

/// Cross-validates on the preprocessed training segments and evaluates each
/// fold's selected model on the test segments.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainReport> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(f) = args.folds {
        config.folds = f;
    }
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    if let Some(p) = args.parallel_folds {
        config.parallel_folds = p;
    }
    let load = |name: &str| {
        let path = args.data.join(name);
        SegmentSet::load(&path).with_context(|| format!("loading {}", path.display()))
    };
    let train = load(TRAIN_SEGMENTS)?;
    let test = load(TEST_SEGMENTS)?;
    if train.is_empty() {
        bail!("{} holds no training segments", args.data.display());
    }
    if test.is_empty() {
        bail!("{} holds no test segments; preprocess with --test-split > 0", args.data.display());
    }
    config.network.input = [1, train.bands, train.frames];
    let config = config.finalize()?;

    let clips = clips_of(&train.segments);
    let split = make_folds(&clips, config.folds, config.seed)?;
    let cv = cross_validate(
        &train.segments,
        &split,
        &test.segments,
        &config.network,
        &config.train,
        config.parallel_folds,
    )?;

    ensure_dir(&args.out)?;
    for fold in &cv.folds {
        let fold_train = TrainConfig {
            seed: config.train.seed.wrapping_add(fold.fold as u64),
            ..config.train.clone()
        };
        let path = args.out.join(checkpoint_name(fold.fold));
        CheckpointRecord::from_outcome(&fold.outcome, &fold_train, Some(fold.fold))
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let report = TrainReport {
        train_clips: clips.len(),
        train_segments: train.len(),
        test_segments: test.len(),
        metrics: cv.report,
        folds: cv
            .folds
            .iter()
            .map(|f| FoldRecord {
                fold: f.fold,
                train_segments: f.train_segments,
                val_segments: f.val_segments,
                history: f.outcome.history.clone(),
            })
            .collect(),
    };
    std::fs::write(args.out.join(REPORT_JSON), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(args.out.join(REPORT_TEXT), report.to_text())?;
    config.write_to_dir(&args.out)?;
    Ok(report)
}
