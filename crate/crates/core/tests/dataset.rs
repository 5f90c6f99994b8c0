use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;

use phonation::audio::{AudioClip, FeatureConfig, FeatureExtractor, MelSpectrogram};
use phonation::dataset::{
    make_folds, segment_for_test, segment_for_training, synthesize_clip, synthesize_dataset,
    training_segment_count, LabeledClip, PhonationMode, SegmentConfig, SynthConfig,
};
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn clips(n: usize) -> Vec<LabeledClip> {
    (0..n)
        .map(|i| LabeledClip {
            id: format!("clip{i:03}.wav"),
            mode: PhonationMode::from_index(i % 4).unwrap(),
            pitch: None,
            vowel: None,
        })
        .collect()
}

fn tone_clip(seconds: f64) -> AudioClip {
    let n = (44100.0 * seconds).round() as usize;
    AudioClip::new(
        (0..n).map(|i| 0.4 * (2.0 * PI * 330.0 * i as f64 / 44100.0).sin()).collect(),
        44100,
    )
    .unwrap()
}

#[test]
fn two_second_clip_gives_four_segments() {
    let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let spec = ex.extract(&tone_clip(2.0), "tone").unwrap();
    assert_eq!(spec.frames, 49);
    let out = segment_for_training(&spec, PhonationMode::Neutral, &SegmentConfig::default()).unwrap();
    // trimmed frames 4..45; windows start at 4, 13, 22, 31 (31 + 12 = 43 ≤ 45, 40 + 12 > 45)
    let offsets: Vec<usize> = out.segments.iter().map(|s| s.origin.frame_offset).collect();
    assert_eq!(offsets, vec![4, 13, 22, 31]);
    for s in &out.segments {
        assert_eq!((s.bands, s.frames), (128, 12));
        assert_eq!(s.origin.clip_id, "tone");
        assert!(s.values.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn three_second_clip_test_window_is_centred() {
    let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let spec = ex.extract(&tone_clip(3.0), "tone").unwrap();
    let seg = segment_for_test(&spec, PhonationMode::Flow, &SegmentConfig::default()).unwrap();
    // enumerate candidate offsets: the centred one leaves equal (±1) margins
    let margins: Vec<usize> = (0..=spec.frames - 12)
        .filter(|&o| {
            let (left, right) = (o, spec.frames - 12 - o);
            right == left || right == left + 1
        })
        .collect();
    assert_eq!(margins, vec![seg.origin.frame_offset]);
    assert_eq!(seg.origin.frame_offset, (spec.frames - 12) / 2);
    assert_eq!(seg.values, spec.window(seg.origin.frame_offset, 12));
}

#[test]
fn training_and_test_shapes_agree() {
    let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let cfg = SegmentConfig::default();
    for seconds in [1.3, 2.2, 3.7] {
        let spec = ex.extract(&tone_clip(seconds), "t").unwrap();
        let test = segment_for_test(&spec, PhonationMode::Breathy, &cfg).unwrap();
        for s in segment_for_training(&spec, PhonationMode::Breathy, &cfg).unwrap().segments {
            assert_eq!((s.bands, s.frames), (test.bands, test.frames));
        }
    }
}

#[test]
fn even_fold_sizes() {
    let split = make_folds(&clips(20), 10, 7).unwrap();
    assert_eq!(split.sizes(), vec![2; 10]);
    assert_eq!(split, make_folds(&clips(20), 10, 7).unwrap());
    assert_ne!(split, make_folds(&clips(20), 10, 8).unwrap());
}

#[test]
fn uneven_fold_sizes() {
    let split = make_folds(&clips(23), 10, 3).unwrap();
    let sizes = split.sizes();
    assert_eq!(sizes.iter().sum::<usize>(), 23);
    assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 7);
    assert_eq!(sizes.iter().filter(|&&s| s == 3).count(), 3);
}

#[test]
fn too_few_clips_for_folds() {
    assert!(make_folds(&clips(9), 10, 0).is_err());
}

#[test]
fn synthesis_is_deterministic_and_balanced() {
    let cfg = SynthConfig {
        clips: 100,
        duration_range_s: (0.2, 0.3),
        seed: 11,
        ..SynthConfig::default()
    };
    let a = synthesize_dataset(&cfg).unwrap();
    let b = synthesize_dataset(&cfg).unwrap();
    assert_eq!(a.len(), 100);
    for ((ca, la), (cb, lb)) in a.iter().zip(&b) {
        assert_eq!(la, lb);
        assert!(ca.samples().iter().zip(cb.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let mut per_mode = BTreeMap::new();
    for (_, l) in &a {
        *per_mode.entry(l.mode).or_insert(0) += 1;
    }
    assert!(per_mode.values().all(|&n| n == 25), "{per_mode:?}");
    let ids: HashSet<&str> = a.iter().map(|(_, l)| l.id.as_str()).collect();
    assert_eq!(ids.len(), 100);
    let other = synthesize_clip(&SynthConfig { seed: 12, ..cfg }, 0).0;
    assert_ne!(other.samples(), a[0].0.samples());
}

fn high_band_fraction(clip: &AudioClip, cutoff: f64) -> f64 {
    let n = clip.len();
    let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin_hz = clip.sample_rate() as f64 / n as f64;
    let (mut high, mut total) = (0.0, 0.0);
    for (k, c) in buf[..=n / 2].iter().enumerate() {
        let p = c.norm_sqr();
        total += p;
        if k as f64 * bin_hz > cutoff {
            high += p;
        }
    }
    high / total
}

#[test]
fn breathy_has_more_high_band_energy_than_pressed() {
    let cfg = SynthConfig {
        duration_range_s: (0.5, 0.8),
        seed: 5,
        ..SynthConfig::default()
    };
    let mean = |mode: PhonationMode| {
        let idx: Vec<usize> = (0..40).filter(|i| i % 4 == mode.index()).collect();
        idx.iter()
            .map(|&i| high_band_fraction(&synthesize_clip(&cfg, i).0, 5000.0))
            .sum::<f64>()
            / idx.len() as f64
    };
    let (breathy, pressed) = (mean(PhonationMode::Breathy), mean(PhonationMode::Pressed));
    assert!(breathy > pressed, "breathy {breathy}, pressed {pressed}");
}

fn mean_band_energy(spec: &MelSpectrogram) -> Vec<f64> {
    spec.values
        .chunks_exact(spec.frames)
        .map(|band| band.iter().sum::<f64>() / spec.frames as f64)
        .collect()
}

/// Multiclass perceptron; returns the training error count after convergence
/// or the epoch budget.
fn perceptron_errors(x: &[Vec<f64>], y: &[usize], epochs: usize) -> usize {
    let d = x[0].len() + 1;
    let mut w = vec![vec![0.0; d]; 4];
    let score = |w: &[f64], xi: &[f64]| w[d - 1] + w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
    let predict = |w: &[Vec<f64>], xi: &[f64]| {
        (0..4)
            .max_by(|&a, &b| score(&w[a], xi).total_cmp(&score(&w[b], xi)))
            .unwrap()
    };
    for _ in 0..epochs {
        let mut errors = 0;
        for (xi, &yi) in x.iter().zip(y) {
            let p = predict(&w, xi);
            if p != yi {
                errors += 1;
                for j in 0..d - 1 {
                    w[yi][j] += xi[j];
                    w[p][j] -= xi[j];
                }
                w[yi][d - 1] += 1.0;
                w[p][d - 1] -= 1.0;
            }
        }
        if errors == 0 {
            return 0;
        }
    }
    x.iter().zip(y).filter(|(xi, &yi)| predict(&w, xi) != yi).count()
}

#[test]
fn synthetic_classes_are_linearly_separable() {
    let cfg = SynthConfig {
        clips: 80,
        seed: 21,
        ..SynthConfig::default()
    };
    let ex = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (clip, label) in synthesize_dataset(&cfg).unwrap() {
        x.push(mean_band_energy(&ex.extract(&clip, &label.id).unwrap()));
        y.push(label.mode.index());
    }
    assert_eq!(perceptron_errors(&x, &y, 2000), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn segment_count_matches_enumeration(t in 0usize..400, f in 1usize..40, stride in 1usize..40) {
        let mut count = 0;
        let mut start = 0;
        while start + f <= t {
            count += 1;
            start += stride;
        }
        prop_assert_eq!(training_segment_count(t, f, stride), count);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_never_split_a_clip(n in 10usize..80, folds in 2usize..10, seed in any::<u64>()) {
        let all = clips(n);
        let split = make_folds(&all, folds, seed).unwrap();
        let sizes = split.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        // each clip contributes several segments; all must resolve to one fold
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &all {
            for _segment in 0..3 {
                let fold = split.fold_of(&c.id).unwrap();
                prop_assert_eq!(*seen.entry(c.id.as_str()).or_insert(fold), fold);
            }
        }
        let mut union: Vec<&str> = (0..folds).flat_map(|k| split.members(k)).collect();
        union.sort_unstable();
        let before = union.len();
        union.dedup();
        prop_assert_eq!(before, union.len());
        prop_assert_eq!(union.len(), n);
    }
}
