//! Audio decoding and mel-spectrogram feature extraction.
//!
//! The feature path is: decode → resample to 44.1 kHz → trim leading and
//! trailing silence → Hann-windowed STFT (2048 samples, 12.5 % overlap) →
//! 128-band HTK mel projection → `ln(1 + x)` compression.

mod mel;
mod resample;
mod stft;
mod trim;
mod wav;

pub use mel::{
    build_mel_filterbank, hz_to_mel, mel_spectrogram, mel_spectrogram_with, mel_to_hz,
    Compression, MelFilterbank, MelSpectrogram,
};
pub use resample::resample;
pub use stft::{frame_count, stft_magnitude, MagnitudeGrid, StftConfig, WindowFunction};
pub use trim::{trim_silence, TrimConfig};
pub use wav::{decode_wav, encode_wav_pcm16, read_wav, write_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV codec: {0}")]
    UnsupportedCodec(String),
    #[error("WAV file contains no samples")]
    EmptyPayload,
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("clip has {len} samples, shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("clip is silent everywhere")]
    AllSilent,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono audio with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::InvalidClip(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Resolved parameters of the whole audio → spectrogram path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub trim: TrimConfig,
    pub stft: StftConfig,
    pub n_bands: usize,
    pub f_min: f64,
    /// `None` means the Nyquist frequency of `sample_rate`.
    pub f_max: Option<f64>,
    pub compression: Compression,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            trim: TrimConfig::default(),
            stft: StftConfig::default(),
            n_bands: 128,
            f_min: 0.0,
            f_max: None,
            compression: Compression::Log1p,
        }
    }
}

impl FeatureConfig {
    pub fn filterbank(&self) -> Result<MelFilterbank, AudioError> {
        build_mel_filterbank(
            self.stft.window_size,
            self.sample_rate,
            self.n_bands,
            self.f_min,
            self.f_max.unwrap_or(self.sample_rate as f64 / 2.0),
        )
    }

    /// Seconds between consecutive spectrogram frames.
    pub fn hop_seconds(&self) -> f64 {
        self.stft.hop() as f64 / self.sample_rate as f64
    }
}

/// Reusable resample → trim → mel pipeline with a prebuilt filterbank.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    bank: MelFilterbank,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self, AudioError> {
        config.stft.validate()?;
        let bank = config.filterbank()?;
        Ok(Self { config, bank })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn extract(&self, clip: &AudioClip, source_id: &str) -> Result<MelSpectrogram, AudioError> {
        let clip = resample(clip, self.config.sample_rate)?;
        let clip = trim_silence(&clip, &self.config.trim)?;
        let mut spec = mel_spectrogram_with(&clip, &self.config.stft, &self.bank, self.config.compression)?;
        spec.source_id = source_id.to_string();
        Ok(spec)
    }
}
