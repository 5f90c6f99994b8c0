use serde::{Deserialize, Serialize};

use super::{AudioClip, AudioError};

/// Head/tail silence gate: frames whose RMS falls more than `threshold_db`
/// below the loudest frame are dropped from either end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrimConfig {
    pub threshold_db: f64,
    pub frame_seconds: f64,
    pub hop_seconds: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            threshold_db: -60.0,
            frame_seconds: 0.020,
            hop_seconds: 0.010,
        }
    }
}

pub fn trim_silence(clip: &AudioClip, config: &TrimConfig) -> Result<AudioClip, AudioError> {
    if config.threshold_db.is_nan() || config.threshold_db >= 0.0 {
        return Err(AudioError::InvalidConfig(format!(
            "silence threshold must be negative dB, got {}",
            config.threshold_db
        )));
    }
    let rate = clip.sample_rate() as f64;
    let frame = ((config.frame_seconds * rate).round() as usize).max(1);
    let hop = ((config.hop_seconds * rate).round() as usize).max(1);
    let samples = clip.samples();

    let starts: Vec<usize> = (0..samples.len()).step_by(hop).collect();
    let rms: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let chunk = &samples[s..(s + frame).min(samples.len())];
            (chunk.iter().map(|x| x * x).sum::<f64>() / chunk.len() as f64).sqrt()
        })
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(AudioError::AllSilent);
    }
    let threshold = peak * 10f64.powf(config.threshold_db / 20.0);
    let loud = |r: &f64| *r >= threshold;
    let first = rms.iter().position(loud).ok_or(AudioError::AllSilent)?;
    let last = rms.iter().rposition(loud).ok_or(AudioError::AllSilent)?;

    let begin = starts[first];
    let end = (starts[last] + frame).min(samples.len());
    if begin == 0 && end == samples.len() {
        return Ok(clip.clone());
    }
    AudioClip::new(samples[begin..end].to_vec(), clip.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_padded_tone_is_cut_to_the_tone() {
        let rate = 44100;
        let pad = (0.2 * rate as f64) as usize;
        let tone_len = rate as usize;
        let mut samples = vec![0.0; pad];
        samples.extend((0..tone_len).map(|i| 0.5 * (i as f64 * 0.0627).sin() + 0.01));
        samples.extend(vec![0.0; pad]);
        let clip = AudioClip::new(samples, rate).unwrap();
        let out = trim_silence(&clip, &TrimConfig::default()).unwrap();
        let frame = 882i64;
        assert!((out.len() as i64 - tone_len as i64).abs() <= frame, "{}", out.len());
        // first frame start (multiple of the 441-sample hop) overlapping the tone
        let begin = (pad - 882 + 1).div_ceil(441) * 441;
        let start = pad - begin;
        assert!(out.samples()[start..start + tone_len]
            .iter()
            .zip(&clip.samples()[pad..pad + tone_len])
            .all(|(a, b)| a == b));
    }

    #[test]
    fn loud_clip_unchanged() {
        let clip = AudioClip::new((0..5000).map(|i| (i as f64 * 0.1).sin()).collect(), 44100).unwrap();
        assert_eq!(trim_silence(&clip, &TrimConfig::default()).unwrap(), clip);
    }

    #[test]
    fn all_zero_is_error() {
        let clip = AudioClip::new(vec![0.0; 2000], 44100).unwrap();
        assert!(matches!(trim_silence(&clip, &TrimConfig::default()), Err(AudioError::AllSilent)));
    }

    #[test]
    fn positive_threshold_rejected() {
        let clip = AudioClip::new(vec![0.1; 100], 44100).unwrap();
        let cfg = TrimConfig {
            threshold_db: 3.0,
            ..TrimConfig::default()
        };
        assert!(trim_silence(&clip, &cfg).is_err());
    }
}
