//! Band-limited resampling by direct Kaiser-windowed sinc interpolation.

use std::f64::consts::PI;

use super::{AudioClip, AudioError};

/// Zero crossings on each side of the kernel, in units of the lower of the
/// two sample rates (32 taps per output sample).
const HALF_TAPS: f64 = 16.0;
const KAISER_BETA: f64 = 8.6;

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Resample to `target_rate`. A clip already at the target rate is returned
/// unchanged; otherwise the output has `round(len · target / source)` samples.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidConfig("target sample rate must be positive".into()));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let src = clip.samples();
    let ratio = target_rate as f64 / source_rate as f64;
    let out_len = ((src.len() as f64 * ratio).round() as usize).max(1);
    let cutoff = ratio.min(1.0);
    let half_width = HALF_TAPS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);

    let out = (0..out_len)
        .map(|i| {
            let t = (i as u64 * source_rate as u64) as f64 / target_rate as f64;
            let first = (t - half_width).ceil().max(0.0) as usize;
            let last = ((t + half_width).floor() as usize).min(src.len() - 1);
            let mut acc = 0.0;
            for (j, &s) in src.iter().enumerate().take(last + 1).skip(first) {
                let d = t - j as f64;
                let r = d / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                acc += s * cutoff * sinc(cutoff * d) * window;
            }
            acc
        })
        .collect();
    AudioClip::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_reference_points() {
        assert_eq!(bessel_i0(0.0), 1.0);
        // I0(1) = 1.2660658777520082
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    }

    #[test]
    fn same_rate_is_identity() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 44100).unwrap();
        assert_eq!(resample(&clip, 44100).unwrap(), clip);
    }

    #[test]
    fn duration_preserved() {
        let clip = AudioClip::new(vec![0.0; 48000], 48000).unwrap();
        let out = resample(&clip, 44100).unwrap();
        assert!((out.len() as i64 - 44100).abs() <= 1);
        assert_eq!(out.sample_rate(), 44100);
    }

    #[test]
    fn dc_gain_is_unity_in_the_interior() {
        let clip = AudioClip::new(vec![0.5; 4000], 16000).unwrap();
        let out = resample(&clip, 44100).unwrap();
        for &v in &out.samples()[200..out.len() - 200] {
            assert!((v - 0.5).abs() < 1e-3, "{v}");
        }
    }
}
