use serde::{Deserialize, Serialize};

use super::stft::{stft_magnitude, StftConfig};
use super::{AudioClip, AudioError};

/// HTK mel mapping `2595 · log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    /// `ln(1 + x)` of the mel magnitude.
    Log1p,
    /// Raw mel magnitude.
    None,
}

/// Triangular filters with peaks equally spaced on the mel scale.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    /// Row-major `n_bands × bins`.
    weights: Vec<f64>,
    n_bands: usize,
    bins: usize,
    centers: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
    pub window_size: usize,
}

impl MelFilterbank {
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn row(&self, band: usize) -> &[f64] {
        &self.weights[band * self.bins..(band + 1) * self.bins]
    }

    /// Peak frequency (Hz) of each band.
    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.window_size as f64
    }

    /// Index of the band whose peak lies closest to `hz`.
    pub fn nearest_band(&self, hz: f64) -> usize {
        self.centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - hz).abs().total_cmp(&(b.1 - hz).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

pub fn build_mel_filterbank(
    window_size: usize,
    sample_rate: u32,
    n_bands: usize,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank, AudioError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(AudioError::InvalidConfig(format!(
            "mel bounds must satisfy 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"
        )));
    }
    if n_bands == 0 || window_size < 2 {
        return Err(AudioError::InvalidConfig("need at least one band and a window of 2".into()));
    }
    let bins = window_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let mut edges: Vec<f64> = (0..n_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_bands + 1) as f64))
        .collect();
    // pin the outer edges so the mel round trip cannot leak weight past them
    edges[0] = f_min;
    edges[n_bands + 1] = f_max;
    let bin_hz = sample_rate as f64 / window_size as f64;
    let mut weights = vec![0.0; n_bands * bins];
    for band in 0..n_bands {
        let (left, center, right) = (edges[band], edges[band + 1], edges[band + 2]);
        let row = &mut weights[band * bins..(band + 1) * bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            *w = rising.min(falling).max(0.0);
        }
    }
    Ok(MelFilterbank {
        weights,
        n_bands,
        bins,
        centers: edges[1..=n_bands].to_vec(),
        f_min,
        f_max,
        sample_rate,
        window_size,
    })
}

/// Mel-band magnitudes, stored band-major: `values[band * frames + frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub n_bands: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub frame_hop_seconds: f64,
    pub source_id: String,
}

impl MelSpectrogram {
    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * self.frames + frame]
    }

    /// Copy of frames `offset..offset + len`, band-major.
    pub fn window(&self, offset: usize, len: usize) -> Vec<f64> {
        assert!(offset + len <= self.frames, "window exceeds spectrogram");
        let mut out = Vec::with_capacity(self.n_bands * len);
        for band in self.values.chunks_exact(self.frames) {
            out.extend_from_slice(&band[offset..offset + len]);
        }
        out
    }
}

pub fn mel_spectrogram(
    clip: &AudioClip,
    config: &StftConfig,
    bank: &MelFilterbank,
) -> Result<MelSpectrogram, AudioError> {
    mel_spectrogram_with(clip, config, bank, Compression::Log1p)
}

pub fn mel_spectrogram_with(
    clip: &AudioClip,
    config: &StftConfig,
    bank: &MelFilterbank,
    compression: Compression,
) -> Result<MelSpectrogram, AudioError> {
    if clip.sample_rate() != bank.sample_rate {
        return Err(AudioError::InvalidConfig(format!(
            "clip at {} Hz, filterbank built for {} Hz",
            clip.sample_rate(),
            bank.sample_rate
        )));
    }
    if config.window_size != bank.window_size {
        return Err(AudioError::InvalidConfig(format!(
            "STFT window {} does not match filterbank window {}",
            config.window_size, bank.window_size
        )));
    }
    let grid = stft_magnitude(clip, config)?;
    let frames = grid.frames;
    let mut values = vec![0.0; bank.n_bands * frames];
    for band in 0..bank.n_bands {
        let out = &mut values[band * frames..(band + 1) * frames];
        for (k, &w) in bank.row(band).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mags = &grid.values[k * frames..(k + 1) * frames];
            for (o, m) in out.iter_mut().zip(mags) {
                *o += w * m;
            }
        }
    }
    if compression == Compression::Log1p {
        for v in values.iter_mut() {
            *v = v.ln_1p();
        }
    }
    Ok(MelSpectrogram {
        n_bands: bank.n_bands,
        frames,
        values,
        frame_hop_seconds: config.hop() as f64 / clip.sample_rate() as f64,
        source_id: String::new(),
    })
}
