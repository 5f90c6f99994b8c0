mod eval;
mod gradcam;
mod preprocess;
mod synth;
mod train;

pub use eval::{cmd_eval, EvalArgs, EvalOutcome, Split};
pub use gradcam::{cmd_gradcam, GradcamArgs};
pub use preprocess::{cmd_preprocess, ModeCounts, PreprocessArgs, PreprocessSummary, SkippedClip};
pub use synth::{cmd_synth, DurationRange, SynthArgs};
pub use train::{cmd_train, format_confusion, FoldRecord, TrainArgs, TrainReport};

use std::path::Path;

use anyhow::{Context, Result};

pub const TRAIN_SEGMENTS: &str = "train.segs";
pub const TEST_SEGMENTS: &str = "test.segs";
pub const MANIFEST: &str = "manifest.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

pub fn checkpoint_name(fold: usize) -> String {
    format!("fold_{fold}.ckpt")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}
