use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AudioClip, AudioError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFunction {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl WindowFunction {
    pub fn coefficients(self, size: usize) -> Vec<f64> {
        match self {
            Self::Hann => (0..size)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / size as f64).cos())
                .collect(),
            Self::Rectangular => vec![1.0; size],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_size: usize,
    pub overlap_fraction: f64,
    pub window: WindowFunction,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_size: 2048,
            overlap_fraction: 0.125,
            window: WindowFunction::Hann,
        }
    }
}

impl StftConfig {
    /// Samples between frame starts: `round(window · (1 − overlap))`.
    pub fn hop(&self) -> usize {
        (self.window_size as f64 * (1.0 - self.overlap_fraction)).round() as usize
    }

    pub fn bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.window_size < 2 {
            return Err(AudioError::InvalidConfig("window size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(AudioError::InvalidConfig(format!(
                "overlap fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if self.hop() < 1 {
            return Err(AudioError::InvalidConfig("hop rounds to zero".into()));
        }
        Ok(())
    }
}

/// `1 + floor((len − window) / hop)`, or `None` when `len < window`.
pub fn frame_count(len: usize, window: usize, hop: usize) -> Option<usize> {
    (len >= window && hop > 0).then(|| 1 + (len - window) / hop)
}

/// Magnitude spectrogram, stored bin-major: `values[bin * frames + frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeGrid {
    pub bins: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

impl MagnitudeGrid {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }
}

pub fn stft_magnitude(clip: &AudioClip, config: &StftConfig) -> Result<MagnitudeGrid, AudioError> {
    config.validate()?;
    let n = config.window_size;
    let hop = config.hop();
    let frames = frame_count(clip.len(), n, hop).ok_or(AudioError::TooShort {
        len: clip.len(),
        window: n,
    })?;
    let bins = config.bins();
    let window = config.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = vec![0.0; bins * frames];
    for f in 0..frames {
        let chunk = &clip.samples()[f * hop..f * hop + n];
        for ((b, &s), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(bins).enumerate() {
            values[k * frames + f] = c.norm();
        }
    }
    Ok(MagnitudeGrid {
        bins,
        frames,
        values,
    })
}
