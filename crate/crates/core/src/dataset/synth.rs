//! Synthetic sustained vowels in four phonation styles.
//!
//! Each clip is a harmonic series shaped by a spectral tilt (and, for pressed
//! voice, a mid-band resonance boost), plus pre-emphasised noise at a fixed
//! ratio of the harmonic energy, all under a slow amplitude modulation.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledClip, PhonationMode};
use crate::audio::AudioClip;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub harmonics: usize,
    /// Noise energy as a fraction of harmonic energy.
    pub noise_ratio: f64,
    pub tilt_db_per_octave: f64,
    pub am_depth: f64,
    pub am_rate_hz: f64,
    /// Peak gain of the log-Gaussian bump centred on `MID_BAND_HZ`.
    pub mid_boost_db: f64,
}

impl ModeParams {
    pub fn default_for(mode: PhonationMode) -> Self {
        let p = |harmonics, noise_ratio, tilt_db_per_octave, am_depth, am_rate_hz, mid_boost_db| Self {
            harmonics,
            noise_ratio,
            tilt_db_per_octave,
            am_depth,
            am_rate_hz,
            mid_boost_db,
        };
        match mode {
            PhonationMode::Breathy => p(10, 0.6, -14.0, 0.05, 3.0, 0.0),
            PhonationMode::Neutral => p(20, 0.08, -8.0, 0.05, 3.0, 0.0),
            PhonationMode::Flow => p(24, 0.05, -5.0, 0.35, 5.5, 0.0),
            PhonationMode::Pressed => p(30, 0.02, -9.0, 0.03, 3.0, 14.0),
        }
    }

    fn validate(&self, mode: PhonationMode) -> Result<(), DatasetError> {
        let ok = self.harmonics >= 1
            && self.noise_ratio >= 0.0
            && (0.0..1.0).contains(&self.am_depth)
            && self.am_rate_hz >= 0.0
            && [self.noise_ratio, self.tilt_db_per_octave, self.am_rate_hz, self.mid_boost_db]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DatasetError::InvalidConfig(format!("{mode} parameters out of range: {self:?}")))
        }
    }
}

const MID_BAND_HZ: f64 = 2000.0;
const MID_BAND_OCTAVES: f64 = 0.7;
const HIGHEST_PARTIAL_HZ: f64 = 20_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub clips: usize,
    /// Indexed by [`PhonationMode::index`].
    pub modes: [ModeParams; 4],
    pub f0_range_hz: (f64, f64),
    /// Voiced duration, excluding the leading and trailing silence.
    pub duration_range_s: (f64, f64),
    /// Relative per-clip spread applied to noise ratio and modulation.
    pub variation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44_100,
            clips: 100,
            modes: PhonationMode::ALL.map(ModeParams::default_for),
            f0_range_hz: (196.0, 523.0),
            duration_range_s: (1.2, 2.0),
            variation: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn params(&self, mode: PhonationMode) -> &ModeParams {
        &self.modes[mode.index()]
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi;
        if !range_ok(self.f0_range_hz) || !range_ok(self.duration_range_s) {
            return Err(DatasetError::InvalidConfig(
                "f0 and duration ranges must satisfy 0 < lo < hi".into(),
            ));
        }
        if self.f0_range_hz.1 >= self.sample_rate as f64 / 2.0 {
            return Err(DatasetError::InvalidConfig("f0 range reaches Nyquist".into()));
        }
        if !(0.0..1.0).contains(&self.variation) {
            return Err(DatasetError::InvalidConfig("variation must lie in [0, 1)".into()));
        }
        for mode in PhonationMode::ALL {
            self.params(mode).validate(mode)?;
        }
        for (i, a) in self.modes.iter().enumerate() {
            for b in &self.modes[i + 1..] {
                if a == b {
                    return Err(DatasetError::InvalidConfig(
                        "two phonation modes share identical parameters".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn note_name(hz: f64) -> String {
    const NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];
    let midi = (69.0 + 12.0 * (hz / 440.0).log2()).round() as i64;
    format!("{}{}", NAMES[midi.rem_euclid(12) as usize], midi.div_euclid(12) - 1)
}

fn mid_band_gain_db(hz: f64, boost_db: f64) -> f64 {
    let octaves = (hz / MID_BAND_HZ).log2() / MID_BAND_OCTAVES;
    boost_db * (-0.5 * octaves * octaves).exp()
}

/// Clip `index` of the dataset. Mode assignment is round-robin, so any
/// multiple of four clips is exactly balanced.
pub fn synthesize_clip(config: &SynthConfig, index: usize) -> (AudioClip, LabeledClip) {
    let mode = PhonationMode::ALL[index % PhonationMode::COUNT];
    let base = config.params(mode);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let sr = config.sample_rate as f64;
    let v = config.variation;

    let f0 = rng.gen_range(config.f0_range_hz.0..config.f0_range_hz.1);
    let duration = rng.gen_range(config.duration_range_s.0..config.duration_range_s.1);
    let noise_ratio = base.noise_ratio * rng.gen_range(-v..=v).exp();
    let tilt = base.tilt_db_per_octave + rng.gen_range(-1.0..=1.0);
    let am_depth = (base.am_depth * (1.0 + rng.gen_range(-v..=v))).clamp(0.0, 0.95);
    let am_rate = base.am_rate_hz * (1.0 + 0.2 * rng.gen_range(-v..=v));
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let lead = rng.gen_range(0.05..0.15);
    let tail = rng.gen_range(0.05..0.15);
    let gain = rng.gen_range(0.3..0.9);

    let n = (duration * sr).round() as usize;
    let mut voiced = vec![0.0; n];
    for h in 1..=base.harmonics {
        let freq = f0 * h as f64;
        if freq >= HIGHEST_PARTIAL_HZ.min(sr / 2.0) {
            break;
        }
        let db = tilt * (h as f64).log2()
            + mid_band_gain_db(freq, base.mid_boost_db)
            + rng.gen_range(-1.0..=1.0);
        let amp = 10f64.powf(db / 20.0);
        // phasor recurrence, renormalised periodically to stop magnitude drift
        let step = 2.0 * PI * freq / sr;
        let (sin_s, cos_s) = step.sin_cos();
        let (mut s, mut c) = rng.gen_range(0.0..2.0 * PI).sin_cos();
        for (i, out) in voiced.iter_mut().enumerate() {
            *out += amp * s;
            (s, c) = (s * cos_s + c * sin_s, c * cos_s - s * sin_s);
            if i % 1024 == 1023 {
                let norm = (s * s + c * c).sqrt();
                s /= norm;
                c /= norm;
            }
        }
    }
    let harmonic_energy: f64 = voiced.iter().map(|x| x * x).sum();

    let mut noise = Vec::with_capacity(n);
    let mut prev = 0.0;
    for _ in 0..n {
        let x: f64 = rng.gen_range(-1.0..1.0);
        noise.push(x - 0.9 * prev);
        prev = x;
    }
    let noise_energy: f64 = noise.iter().map(|x| x * x).sum();
    let noise_gain = if noise_energy > 0.0 {
        (noise_ratio * harmonic_energy / noise_energy).sqrt()
    } else {
        0.0
    };

    let fade = ((0.03 * sr) as usize).min(n / 2).max(1);
    for (i, (out, w)) in voiced.iter_mut().zip(&noise).enumerate() {
        let t = i as f64 / sr;
        let envelope = 1.0 + am_depth * (2.0 * PI * am_rate * t + am_phase).sin();
        let edge = i.min(n - 1 - i);
        let ramp = if edge < fade {
            0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos()
        } else {
            1.0
        };
        *out = (*out + noise_gain * w) * envelope * ramp;
    }
    let peak = voiced.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if peak > 0.0 { gain / peak } else { 0.0 };

    let lead_n = (lead * sr).round() as usize;
    let tail_n = (tail * sr).round() as usize;
    let mut samples = vec![0.0; lead_n];
    samples.extend(voiced.iter().map(|x| x * scale));
    samples.resize(lead_n + n + tail_n, 0.0);

    let clip = AudioClip::new(samples, config.sample_rate).expect("generator output is finite and non-empty");
    let label = LabeledClip {
        id: format!("synth_{index:05}_{mode}"),
        mode,
        pitch: Some(note_name(f0)),
        vowel: Some("a".to_string()),
    };
    (clip, label)
}

pub fn synthesize_dataset(config: &SynthConfig) -> Result<Vec<(AudioClip, LabeledClip)>, DatasetError> {
    config.validate()?;
    Ok((0..config.clips).map(|i| synthesize_clip(config, i)).collect())
}
