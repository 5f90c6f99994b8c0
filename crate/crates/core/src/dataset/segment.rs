//! Cutting mel spectrograms into fixed-width training and test windows.

use serde::{Deserialize, Serialize};

use super::{DatasetError, PhonationMode};
use crate::audio::MelSpectrogram;

/// Segmentation durations in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Removed from each end before windowing.
    pub edge_trim_ms: f64,
    pub window_ms: f64,
    /// Overlap between consecutive training windows.
    pub overlap_ms: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            edge_trim_ms: 128.0,
            window_ms: 500.0,
            overlap_ms: 128.0,
        }
    }
}

/// [`SegmentConfig`] converted to frame counts for one frame hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentFrames {
    pub trim: usize,
    pub window: usize,
    pub stride: usize,
}

impl SegmentConfig {
    pub fn frames(&self, hop_seconds: f64) -> Result<SegmentFrames, DatasetError> {
        if !(hop_seconds > 0.0 && hop_seconds.is_finite()) {
            return Err(DatasetError::InvalidConfig(format!("frame hop {hop_seconds} s")));
        }
        if self.edge_trim_ms < 0.0 || self.overlap_ms < 0.0 || self.window_ms <= 0.0 {
            return Err(DatasetError::InvalidConfig("segment durations must be positive".into()));
        }
        let hop_ms = hop_seconds * 1e3;
        // the epsilon keeps an exact multiple from ceiling up through rounding noise
        let trim = (self.edge_trim_ms / hop_ms - 1e-9).ceil().max(0.0) as usize;
        let window = (self.window_ms / hop_ms).round() as usize;
        let overlap = (self.overlap_ms / hop_ms).round() as usize;
        if window == 0 || overlap >= window {
            return Err(DatasetError::InvalidConfig(format!(
                "window of {window} frames with overlap {overlap} leaves no stride"
            )));
        }
        Ok(SegmentFrames {
            trim,
            window,
            stride: window - overlap,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOrigin {
    pub clip_id: String,
    /// First frame of the window in the untrimmed spectrogram.
    pub frame_offset: usize,
}

/// A `bands × frames` window, band-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub bands: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub mode: PhonationMode,
    pub origin: SegmentOrigin,
}

impl Segment {
    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.frames + frame]
    }
}

/// Number of full windows of `window` frames at `stride` in `frames` frames.
pub fn training_segment_count(frames: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || frames < window {
        0
    } else {
        1 + (frames - window) / stride
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSegments {
    pub segments: Vec<Segment>,
    /// 1 when the clip was too short to yield any window, else 0.
    pub skipped: usize,
}

fn cut(spec: &MelSpectrogram, mode: PhonationMode, offset: usize, len: usize) -> Segment {
    Segment {
        bands: spec.n_bands,
        frames: len,
        values: spec.window(offset, len),
        mode,
        origin: SegmentOrigin {
            clip_id: spec.source_id.clone(),
            frame_offset: offset,
        },
    }
}

/// Edge-trimmed, overlapping windows used as augmented training samples.
pub fn segment_for_training(
    spec: &MelSpectrogram,
    mode: PhonationMode,
    config: &SegmentConfig,
) -> Result<TrainingSegments, DatasetError> {
    let f = config.frames(spec.frame_hop_seconds)?;
    let usable = spec.frames.saturating_sub(2 * f.trim);
    let count = training_segment_count(usable, f.window, f.stride);
    let segments: Vec<Segment> = (0..count)
        .map(|i| cut(spec, mode, f.trim + i * f.stride, f.window))
        .collect();
    Ok(TrainingSegments {
        skipped: usize::from(segments.is_empty()),
        segments,
    })
}

/// The single centred window used for evaluation.
pub fn segment_for_test(
    spec: &MelSpectrogram,
    mode: PhonationMode,
    config: &SegmentConfig,
) -> Result<Segment, DatasetError> {
    let f = config.frames(spec.frame_hop_seconds)?;
    if spec.frames < f.window {
        return Err(DatasetError::TooShort {
            frames: spec.frames,
            needed: f.window,
        });
    }
    Ok(cut(spec, mode, (spec.frames - f.window) / 2, f.window))
}
