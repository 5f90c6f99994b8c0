//! Labeled clips, spectrogram segmentation, cross-validation folds, and the
//! synthetic sustained-vowel generator.

mod folds;
mod manifest;
mod segment;
mod store;
mod synth;

pub use folds::{make_folds, split_train_test, FoldSplit};
pub use manifest::{load_manifest, parse_manifest, write_manifest};
pub use segment::{
    segment_for_test, segment_for_training, training_segment_count, Segment, SegmentConfig,
    SegmentFrames, SegmentOrigin, TrainingSegments,
};
pub use store::SegmentSet;
pub use synth::{synthesize_clip, synthesize_dataset, ModeParams, SynthConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown phonation mode {0:?}")]
    UnknownMode(String),
    #[error("manifest row {row}: missing file path")]
    MissingPath { row: usize },
    #[error("duplicate clip path {0:?}")]
    DuplicatePath(String),
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("spectrogram has {frames} frames, need at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("{clips} clips cannot be split into {folds} folds")]
    TooFewClips { clips: usize, folds: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt segment file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four phonation classes, with stable indices 0..=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhonationMode {
    Breathy,
    Neutral,
    Flow,
    Pressed,
}

impl PhonationMode {
    pub const ALL: [PhonationMode; 4] = [Self::Breathy, Self::Neutral, Self::Flow, Self::Pressed];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Breathy => "breathy",
            Self::Neutral => "neutral",
            Self::Flow => "flow",
            Self::Pressed => "pressed",
        }
    }
}

impl fmt::Display for PhonationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhonationMode {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| DatasetError::UnknownMode(t.to_string()))
    }
}

/// One labeled recording.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledClip {
    /// Source path (manifest) or synthetic id.
    pub id: String,
    pub mode: PhonationMode,
    pub pitch: Option<String>,
    pub vowel: Option<String>,
}
