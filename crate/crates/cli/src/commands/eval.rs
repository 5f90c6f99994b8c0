use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use phonation::dataset::SegmentSet;
use phonation::training::{
    evaluate, metrics_from_confusion, CheckpointRecord, ConfusionMatrix, Metrics,
};

use super::train::format_confusion;
use super::{TEST_SEGMENTS, TRAIN_SEGMENTS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Split {
    #[default]
    Test,
    Train,
}

#[derive(Clone, Debug, Default, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory written by `preprocess`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl EvalOutcome {
    pub fn to_text(&self) -> String {
        let mut out = format_confusion(&self.confusion);
        out.push_str(&format!(
            "accuracy {:.4}  F {:.4}\n",
            self.metrics.accuracy, self.metrics.f_measure
        ));
        out
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutcome> {
    let record = CheckpointRecord::load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let file = match args.split {
        Split::Test => TEST_SEGMENTS,
        Split::Train => TRAIN_SEGMENTS,
    };
    let path = args.data.join(file);
    let set = SegmentSet::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let [_, bands, frames] = record.network.input;
    if (set.bands, set.frames) != (bands, frames) {
        bail!(
            "checkpoint expects {bands}×{frames} segments but {} holds {}×{}",
            path.display(),
            set.bands,
            set.frames
        );
    }
    let confusion = evaluate(&record.net, &set.segments)?;
    let metrics = metrics_from_confusion(&confusion, record.train.f_average)?;
    Ok(EvalOutcome { confusion, metrics })
}
