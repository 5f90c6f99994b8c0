//! End-to-end acceptance checks, one test per criterion. Tests hold a shared
//! lock so each runtime budget is measured without competing work.
//!
//! `cargo test -p phonation-cli --test acceptance -- --nocapture --test-threads 1`
//! prints one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use phonation::audio::{
    build_mel_filterbank, frame_count, resample, stft_magnitude, AudioClip, FeatureConfig,
    FeatureExtractor, MelSpectrogram, StftConfig,
};
use phonation::autodiff::{
    check_gradients, Conv2dParams, GradCheckOptions, GradCheckReport, PoolParams, Tape, Tensor,
    TensorError, Var,
};
use phonation::dataset::{
    segment_for_test, segment_for_training, synthesize_dataset, PhonationMode, SegmentConfig,
    SynthConfig,
};
use phonation::gradcam::{
    encode_pgm, encode_ppm, grad_cam, overlay_and_upsample, weighted_activation_map,
    ActivationMap, Colormap, HeatmapImage, OverlayConfig,
};
use phonation::model::{attention_apply, LayerId, ModelError, NetworkConfig, PhonationNet};
use phonation::training::{
    evaluate, lr_schedule, metrics_from_confusion, train_fold, ConfusionMatrix, FAverage,
    TrainConfig,
};
use phonation_cli::{
    checkpoint_name, cmd_preprocess, cmd_synth, cmd_train, PreprocessArgs, SynthArgs, TrainArgs,
    REPORT_JSON, REPORT_TEXT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs one criterion alone, prints its verdict line, and fails the test
/// when the check or its time budget fails.
fn criterion(id: &str, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Result<String, String>) {
    let _guard = SERIAL.lock().unwrap_or_else(|p| p.into_inner());
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
        .unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
    let elapsed = start.elapsed();
    let outcome = match (outcome, budget) {
        (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
        (o, _) => o,
    };
    match &outcome {
        Ok(detail) => println!("criterion {id} {name}: PASS ({detail}; {elapsed:.1?})"),
        Err(why) => println!("criterion {id} {name}: FAIL ({why}; {elapsed:.1?})"),
    }
    if let Err(why) = outcome {
        panic!("criterion {id} failed: {why}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

fn project(tape: &mut Tape, x: Var, seed: u64) -> Result<Var, TensorError> {
    let w = tape.leaf(random(tape.value(x).shape(), seed, 1.0), false);
    let p = tape.mul(x, w)?;
    Ok(tape.sum(p))
}

/// Every input got 20 probes, or all usable coordinates when it has fewer.
fn probe_coverage(report: &GradCheckReport, inputs: &[Tensor], what: &str) -> Result<(), String> {
    for (i, t) in inputs.iter().enumerate() {
        let n = report.checked.iter().filter(|p| p.input == i).count();
        if report.exhausted.contains(&i) {
            ensure(t.len() < 128 && 2 * n >= t.len(), || {
                format!("{what}: input {i} ({} elements) yielded only {n} probes", t.len())
            })?;
        } else {
            ensure(n == 20, || format!("{what}: input {i} got {n} probes"))?;
        }
    }
    Ok(())
}

#[test]
fn c01_gradient_correctness() {
    criterion("1", "gradient correctness", Some(Duration::from_secs(60)), || {
        type Body = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>>;
        let labels = [0usize, 3, 1, 2, 2, 0];
        let cases: Vec<(&str, Vec<Tensor>, Body)> = vec![
            (
                "conv2d",
                vec![random(&[2, 3, 8, 5], 1, 1.0), random(&[20, 3, 5, 3], 2, 1.0), random(&[20], 3, 1.0)],
                Box::new(|t, v| {
                    let y = t.conv2d(v[0], v[1], v[2], Conv2dParams::padded((2, 1)))?;
                    project(t, y, 4)
                }),
            ),
            (
                "maxpool2d",
                vec![random(&[2, 3, 8, 6], 5, 1.0)],
                Box::new(|t, v| {
                    let y = t.maxpool2d(v[0], PoolParams::square(2))?;
                    project(t, y, 6)
                }),
            ),
            (
                "upsample_bilinear",
                vec![random(&[2, 3, 4, 2], 7, 1.0)],
                Box::new(|t, v| {
                    let y = t.upsample_bilinear(v[0], (8, 5))?;
                    project(t, y, 8)
                }),
            ),
            (
                "dense",
                vec![random(&[4, 6], 9, 1.0), random(&[6, 5], 10, 1.0), random(&[5], 11, 1.0)],
                Box::new(|t, v| {
                    let y = t.dense(v[0], v[1], v[2])?;
                    project(t, y, 12)
                }),
            ),
            (
                "relu",
                vec![random(&[5, 8], 14, 1.0)],
                Box::new(|t, v| {
                    let y = t.relu(v[0]);
                    project(t, y, 15)
                }),
            ),
            (
                "sigmoid",
                vec![random(&[5, 8], 16, 3.0)],
                Box::new(|t, v| {
                    let y = t.sigmoid(v[0]);
                    project(t, y, 17)
                }),
            ),
            (
                "gate",
                vec![random(&[2, 3, 4, 2], 18, 1.0), Tensor::from_fn(&[2, 3, 4, 2], |i| 0.05 + 0.9 * ((i * 7 % 11) as f64 / 11.0))],
                Box::new(|t, v| {
                    let y = t.gate(v[0], v[1])?;
                    project(t, y, 19)
                }),
            ),
            (
                "add/mul",
                vec![random(&[4, 6], 20, 1.0), random(&[4, 6], 21, 1.0)],
                Box::new(|t, v| {
                    let a = t.add(v[0], v[1])?;
                    let m = t.mul(a, v[1])?;
                    project(t, m, 22)
                }),
            ),
            (
                "reshape/flatten/pick",
                vec![random(&[2, 3, 2, 4], 23, 1.0)],
                Box::new(|t, v| {
                    let f = t.flatten(v[0])?;
                    let r = t.reshape(f, &[6, 8])?;
                    let p = t.pick(r, 17)?;
                    let s = project(t, r, 24)?;
                    let sq = t.mul(p, p)?;
                    t.add(s, sq)
                }),
            ),
            (
                "softmax_cross_entropy",
                vec![random(&[6, 4], 25, 2.0)],
                Box::new(move |t, v| t.softmax_cross_entropy(v[0], &labels)),
            ),
        ];
        let mut worst = 0.0f64;
        let mut probes = 0;
        for (name, inputs, body) in &cases {
            let report = check_gradients(inputs, |t, v| body(t, v), GradCheckOptions::default())
                .map_err(|e| format!("{name}: {e}"))?;
            probe_coverage(&report, inputs, name)?;
            let err = report.max_relative_error();
            ensure(err <= 1e-4, || format!("{name}: relative error {err:e} at {:?}", report.worst()))?;
            worst = worst.max(err);
            probes += report.checked.len();
        }

        let net = PhonationNet::build(NetworkConfig::default()).map_err(|e| e.to_string())?;
        let n_params = net.parameters().len();
        let mut inputs = net.parameters().to_vec();
        inputs.push(random(&[2, 1, 128, 12], 26, 1.0));
        let report = check_gradients(
            &inputs,
            |t, v| {
                let pass = net.forward_with(t, v[n_params], &v[..n_params]).map_err(|e| match e {
                    ModelError::Tensor(e) => e,
                    other => panic!("{other}"),
                })?;
                project(t, pass.logits, 27)
            },
            GradCheckOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        probe_coverage(&report, &inputs, "network")?;
        let err = report.max_relative_error();
        ensure(err <= 1e-4, || format!("network: relative error {err:e} at {:?}", report.worst()))?;
        worst = worst.max(err);
        probes += report.checked.len();
        Ok(format!("{} primitives + network, {probes} probes, worst relative error {worst:.2e}", cases.len()))
    });
}

#[test]
fn c02_residual_identity() {
    criterion("2", "residual identity at mask extremes", None, || {
        let mut tape = Tape::new();
        let trunk = random(&[4, 64, 32, 3], 30, 50.0);
        let t = tape.leaf(trunk.clone(), false);
        let zero = tape.leaf(Tensor::zeros(trunk.shape()), false);
        let one = tape.leaf(Tensor::full(trunk.shape(), 1.0), false);
        let h0 = attention_apply(&mut tape, t, zero).map_err(|e| e.to_string())?;
        let h1 = attention_apply(&mut tape, t, one).map_err(|e| e.to_string())?;
        for (i, &tv) in trunk.data().iter().enumerate() {
            let a = tape.value(h0).data()[i];
            ensure(a.to_bits() == tv.to_bits(), || format!("mask 0: {a} vs {tv} at {i}"))?;
            let b = tape.value(h1).data()[i];
            let ulps = (b.to_bits() as i64 - (2.0 * tv).to_bits() as i64).abs();
            ensure(ulps <= 1, || format!("mask 1: {b} vs {} at {i}", 2.0 * tv))?;
        }

        // the same through the network, with the mask branch saturated
        let input = random(&[2, 1, 128, 12], 31, 3.0);
        let mut checked = trunk.len();
        for (bias, factor) in [(-1000.0, 1.0), (1000.0, 2.0)] {
            let mut net = PhonationNet::build(NetworkConfig::default()).map_err(|e| e.to_string())?;
            net.param_mut("mask.proj.weight").unwrap().data_mut().fill(0.0);
            net.param_mut("mask.proj.bias").unwrap().data_mut().fill(bias);
            for a in net.attention_outputs(&input).map_err(|e| e.to_string())? {
                for (h, t) in a.gated.data().iter().zip(a.trunk.data()) {
                    let want = factor * t;
                    let ulps = (h.to_bits() as i64 - want.to_bits() as i64).abs();
                    let limit = if factor == 1.0 { 0 } else { 1 };
                    ensure(ulps <= limit, || format!("network {}: {h} vs {want}", a.layer))?;
                    checked += 1;
                }
            }
        }
        Ok(format!("{checked} elements"))
    });
}

#[test]
fn c03_mask_range() {
    criterion("3", "mask strictly inside (0, 1)", None, || {
        let net = PhonationNet::build(NetworkConfig::default()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        let mut count = 0usize;
        for batch in 0..10i32 {
            // widening scales push the branch toward saturation
            let scale = 10f64.powi(batch - 3);
            let input = Tensor::from_fn(&[100, 1, 128, 12], |_| scale * rng.gen_range(-1.0..1.0));
            for a in net.attention_outputs(&input).map_err(|e| e.to_string())? {
                for &m in a.mask.data() {
                    ensure(m > 0.0 && m < 1.0, || format!("mask value {m} at scale {scale}"))?;
                    lo = lo.min(m);
                    hi = hi.max(m);
                    count += 1;
                }
            }
        }
        Ok(format!("1000 inputs, {count} mask values in [{lo:.3e}, {hi}]"))
    });
}

fn synthetic_segments(clips: usize, seed: u64) -> Vec<phonation::dataset::Segment> {
    let data = synthesize_dataset(&SynthConfig {
        clips,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    data.iter()
        .map(|(clip, label)| {
            let spec = fx.extract(clip, &label.id).unwrap();
            segment_for_test(&spec, label.mode, &SegmentConfig::default()).unwrap()
        })
        .collect()
}

#[test]
fn c04_overfit_sanity() {
    criterion("4", "overfit 16 segments", Some(Duration::from_secs(120)), || {
        let segs = synthetic_segments(16, 3);
        let net = PhonationNet::build(NetworkConfig::default()).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        let out = train_fold(net, &segs, &[], &cfg).map_err(|e| e.to_string())?;
        let first_below = out.history.iter().find(|r| r.train_loss < 0.01).map(|r| r.epoch);
        let last = out.history.last().unwrap().train_loss;
        ensure(last < 0.01, || format!("final mean cross-entropy {last}"))?;
        Ok(format!(
            "loss {:.3} -> {last:.2e}, below 0.01 from epoch {}",
            out.history[0].train_loss,
            first_below.unwrap()
        ))
    });
}

#[test]
fn c05_end_to_end_learning() {
    criterion("5", "end-to-end learning", Some(Duration::from_secs(15 * 60)), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let wavs = dir.path().join("wavs");
        let data = dir.path().join("data");
        let run = dir.path().join("run");
        let clips = cmd_synth(&SynthArgs {
            out: wavs.clone(),
            clips: Some(500),
            seed: Some(0),
            duration_range: None,
            config: None,
        })
        .map_err(|e| format!("{e:#}"))?;
        ensure(clips.len() == 500, || "synth".into())?;
        let summary = cmd_preprocess(&PreprocessArgs {
            manifest: wavs.join("manifest.csv"),
            out: data.clone(),
            test_split: Some(0.2),
            seed: Some(0),
            config: None,
        })
        .map_err(|e| format!("{e:#}"))?;
        let totals = summary.totals();
        ensure(totals.train_clips == 400 && totals.test_clips == 100, || {
            format!("split {} / {}", totals.train_clips, totals.test_clips)
        })?;
        for c in summary.per_mode {
            ensure(c.train_clips == 100 && c.test_clips == 25, || format!("unbalanced {c:?}"))?;
        }
        let report = cmd_train(&TrainArgs {
            data,
            out: run,
            folds: Some(2),
            epochs: Some(60),
            seed: Some(0),
            parallel_folds: Some(1),
            config: None,
        })
        .map_err(|e| format!("{e:#}"))?;
        let m = &report.metrics;
        let per_fold: Vec<String> = m
            .folds
            .iter()
            .map(|f| format!("fold {} acc {:.3} F {:.3}", f.fold, f.metrics.accuracy, f.metrics.f_measure))
            .collect();
        let detail = format!(
            "{} train segments; {}; mean accuracy {:.3} ({:.3}), macro F {:.3} ({:.3})",
            report.train_segments,
            per_fold.join(", "),
            m.accuracy.mean,
            m.accuracy.std,
            m.f_measure.mean,
            m.f_measure.std
        );
        ensure(m.accuracy.mean >= 0.90 && m.f_measure.mean >= 0.90, || detail.clone())?;
        Ok(detail)
    });
}

/// Windows counted by stepping a start pointer, from the millisecond
/// settings directly.
fn brute_force_windows(frames: usize, hop_ms: f64, cfg: &SegmentConfig) -> usize {
    let trim = (cfg.edge_trim_ms / hop_ms).ceil() as usize;
    let window = (cfg.window_ms / hop_ms).round() as usize;
    let stride = window - (cfg.overlap_ms / hop_ms).round() as usize;
    let end = frames.saturating_sub(trim);
    let mut count = 0;
    let mut start = trim;
    while start + window <= end {
        count += 1;
        start += stride;
    }
    count
}

#[test]
fn c06_augmentation_arithmetic() {
    criterion("6", "augmentation arithmetic", None, || {
        let cfg = SegmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let mut total = 0;
        for trial in 0..1000 {
            let hop_ms: f64 = rng.gen_range(10.0..60.0);
            let seconds: f64 = rng.gen_range(0.2..6.0);
            let frames = (seconds * 1000.0 / hop_ms) as usize;
            let spec = MelSpectrogram {
                n_bands: 2,
                frames,
                values: vec![0.0; 2 * frames],
                frame_hop_seconds: hop_ms / 1000.0,
                source_id: "c".into(),
            };
            let got = segment_for_training(&spec, PhonationMode::Flow, &cfg)
                .map_err(|e| e.to_string())?
                .segments
                .len();
            let want = brute_force_windows(frames, hop_ms, &cfg);
            ensure(got == want, || format!("trial {trial}: {frames} frames at {hop_ms} ms: {got} vs {want}"))?;
            total += got;
        }

        // a 2.0 s tone through the full feature pipeline
        let samples = (0..88_200).map(|i| 0.5 * (2.0 * PI * 330.0 * i as f64 / 44_100.0).sin()).collect();
        let clip = AudioClip::new(samples, 44_100).unwrap();
        let spec = FeatureExtractor::new(FeatureConfig::default())
            .unwrap()
            .extract(&clip, "two_seconds")
            .map_err(|e| e.to_string())?;
        let n = segment_for_training(&spec, PhonationMode::Flow, &cfg).unwrap().segments.len();
        ensure(n == 4, || format!("2.0 s clip gave {n} segments ({} frames)", spec.frames))?;
        Ok(format!("1000 configurations, {total} windows; 2.0 s clip -> {n}"))
    });
}

#[test]
fn c07_lr_schedule() {
    criterion("7", "learning-rate schedule", None, || {
        let cfg = TrainConfig::default();
        for (e, want) in [(0, 0.001), (20, 0.0005), (40, 0.00025)] {
            ensure(lr_schedule(&cfg, e) == want, || format!("lr({e}) = {}", lr_schedule(&cfg, e)))?;
        }
        for e in 0..200usize {
            let want = 0.001 * 0.5f64.powi((e / 20) as i32);
            ensure(lr_schedule(&cfg, e) == want, || format!("lr({e}) = {} vs {want}", lr_schedule(&cfg, e)))?;
        }
        Ok("epochs 0..200 exact".into())
    });
}

fn oracle(cm: &[[u64; 4]; 4]) -> (f64, f64) {
    let total: u64 = cm.iter().flatten().sum();
    let correct: u64 = (0..4).map(|i| cm[i][i]).sum();
    let mut f = 0.0;
    for c in 0..4 {
        let tp = cm[c][c] as f64;
        let predicted: u64 = (0..4).map(|r| cm[r][c]).sum();
        let actual: u64 = cm[c].iter().sum();
        if tp > 0.0 {
            let p = tp / predicted as f64;
            let r = tp / actual as f64;
            f += 2.0 * p * r / (p + r);
        }
    }
    (correct as f64 / total as f64, f / 4.0)
}

fn permutations() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if seen.iter().all(|&s| s) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn c08_metric_oracle() {
    criterion("8", "metric oracle", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let perms = permutations();
        for trial in 0..1000 {
            let mut cm = ConfusionMatrix::default();
            for cell in cm.counts.iter_mut().flatten() {
                *cell = if rng.gen_bool(0.25) { 0 } else { rng.gen_range(0..100) };
            }
            if cm.total() == 0 {
                cm.counts[2][1] = 1;
            }
            let m = metrics_from_confusion(&cm, FAverage::Macro).map_err(|e| e.to_string())?;
            let (acc, f) = oracle(&cm.counts);
            ensure((m.accuracy - acc).abs() <= 1e-12 && (m.f_measure - f).abs() <= 1e-12, || {
                format!("trial {trial}: ({}, {}) vs ({acc}, {f})", m.accuracy, m.f_measure)
            })?;
            for p in &perms {
                let mut q = ConfusionMatrix::default();
                for t in 0..4 {
                    for s in 0..4 {
                        q.counts[p[t]][p[s]] = cm.counts[t][s];
                    }
                }
                let mq = metrics_from_confusion(&q, FAverage::Macro).unwrap();
                ensure((mq.f_measure - m.f_measure).abs() <= 1e-12, || {
                    format!("trial {trial}: permutation {p:?} changes macro F")
                })?;
            }
        }
        Ok(format!("1000 matrices, {} permutations each", perms.len()))
    });
}

fn fft_peak_hz(clip: &AudioClip) -> (f64, f64) {
    let n = clip.len();
    let mut buf: Vec<Complex<f64>> = clip.samples().iter().map(|&s| Complex::new(s, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (0..n / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
    let bin = clip.sample_rate() as f64 / n as f64;
    (k as f64 * bin, bin)
}

#[test]
fn c09_dsp_properties() {
    criterion("9", "DSP properties", None, || {
        let mut uncovered = 0;
        let mut bins_checked = 0;
        for (f_min, f_max) in [(0.0, 22_050.0), (50.0, 8_000.0), (300.0, 16_000.0)] {
            let bank = build_mel_filterbank(2048, 44_100, 128, f_min, f_max).map_err(|e| e.to_string())?;
            for k in 0..bank.bins() {
                let f = k as f64 * 44_100.0 / 2048.0;
                if f > f_min && f < f_max {
                    bins_checked += 1;
                    if (0..128).map(|b| bank.row(b)[k]).sum::<f64>() <= 0.0 {
                        uncovered += 1;
                    }
                }
            }
        }
        ensure(uncovered == 0, || format!("{uncovered} bins without filter weight"))?;

        for rate in [8_000u32, 16_000, 22_050, 32_000, 48_000, 96_000] {
            let samples = (0..rate as usize)
                .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / rate as f64).sin())
                .collect();
            let clip = AudioClip::new(samples, rate).unwrap();
            let out = resample(&clip, 44_100).map_err(|e| e.to_string())?;
            let (peak, bin) = fft_peak_hz(&out);
            ensure((peak - 440.0).abs() <= bin, || format!("{rate} Hz source: peak at {peak} Hz"))?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let cfg = StftConfig::default();
        let (window, hop) = (cfg.window_size, cfg.hop());
        for _ in 0..200 {
            let len = rng.gen_range(window..60_000);
            let mut starts = 0;
            while starts * hop + window <= len {
                starts += 1;
            }
            ensure(frame_count(len, window, hop) == Some(starts), || format!("frame_count({len})"))?;
            let clip = AudioClip::new(vec![0.1; len], 44_100).unwrap();
            let frames = stft_magnitude(&clip, &cfg).map_err(|e| e.to_string())?.frames;
            ensure(frames == starts, || format!("stft of {len} samples gave {frames} frames"))?;
        }
        Ok(format!("{bins_checked} bins covered, 6 resampling rates, 200 lengths"))
    });
}

const TONE: std::ops::Range<usize> = 40..44;

fn toy_cam(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::from_fn(&[1, 1, 128, 12], |i| {
        if TONE.contains(&(i / 12)) {
            1.0
        } else {
            rng.gen_range(0.0..0.3)
        }
    });
    let mut tape = Tape::new();
    let x = tape.leaf(input, true);
    let k = tape.leaf(Tensor::new(&[1, 1, 5, 1], vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap(), false);
    let b = tape.leaf(Tensor::full(&[1], -0.3), false);
    let y = tape.conv2d(x, k, b, Conv2dParams::padded((2, 0))).unwrap();
    let a = tape.relu(y);
    let flat = tape.flatten(a).unwrap();
    let w = tape.leaf(Tensor::from_fn(&[128 * 12, 2], |i| if i % 2 == 0 { 1.0 } else { -1.0 }), false);
    let zero = tape.leaf(Tensor::zeros(&[2]), false);
    let logits = tape.dense(flat, w, zero).unwrap();
    let target = tape.pick(logits, 0).unwrap();
    tape.backward(target).unwrap();
    weighted_activation_map(tape.value(a), tape.grad(a).unwrap()).unwrap().2
}

#[test]
fn c10_grad_cam() {
    criterion("10", "Grad-CAM", None, || {
        let net = PhonationNet::build(NetworkConfig::default()).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut maps = 0;
        for trial in 0..8 {
            let input = Tensor::from_fn(&[1, 1, 128, 12], |_| rng.gen_range(0.0..3.0));
            for layer in LayerId::ALL {
                let map = grad_cam(&net, &input, trial % 4, layer, "r").map_err(|e| e.to_string())?;
                ensure(map.values.iter().all(|&v| v >= 0.0), || format!("{layer}: negative value"))?;
                ensure(map.is_zero() || map.max() == 1.0, || format!("{layer}: max {}", map.max()))?;
                maps += 1;
            }
        }

        let mut worst: f64 = 1.0;
        for seed in 0..5 {
            let cam = toy_cam(seed);
            let inside: f64 = cam.iter().enumerate().filter(|(i, _)| TONE.contains(&(i / 12))).map(|(_, v)| v).sum();
            let frac = inside / cam.iter().sum::<f64>();
            ensure(frac >= 0.8, || format!("toy seed {seed}: {frac:.3} of mass in the band"))?;
            worst = worst.min(frac);
        }

        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
        let img = HeatmapImage {
            width: 2,
            height: 2,
            intensity: vec![0.0, 1.0, 0.5, 0.25],
            rgb: vec![0x10, 0x20, 0x30, 0x40, 0x50, 0x60, 0x70, 0x80, 0x90, 0xa0, 0xb0, 0xc0],
            colormap: Colormap::Viridis,
            has_underlay: false,
        };
        let pgm = std::fs::read(fixtures.join("heatmap_2x2.pgm")).map_err(|e| e.to_string())?;
        let ppm = std::fs::read(fixtures.join("heatmap_2x2.ppm")).map_err(|e| e.to_string())?;
        ensure(encode_pgm(&img).unwrap() == pgm, || "PGM bytes differ from fixture".into())?;
        ensure(encode_ppm(&img).unwrap() == ppm, || "PPM bytes differ from fixture".into())?;

        // an upsampled real map exports at the input resolution
        let map = ActivationMap {
            height: 32,
            width: 3,
            values: (0..96).map(|i| i as f64 / 95.0).collect(),
            layer: LayerId::Conv3,
            class: 0,
            source_id: "r".into(),
            input: (128, 12),
        };
        let big = overlay_and_upsample(&map, None, &OverlayConfig::default()).map_err(|e| e.to_string())?;
        ensure(encode_pgm(&big).unwrap().len() == b"P5\n12 128\n255\n".len() + 128 * 12, || "PGM size".into())?;
        Ok(format!("{maps} network maps normalized, toy band mass >= {worst:.3}, fixtures byte-exact"))
    });
}

#[test]
fn c11_reproducibility() {
    criterion("11", "reproducible training", None, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let wavs = dir.path().join("wavs");
        let data = dir.path().join("data");
        cmd_synth(&SynthArgs {
            out: wavs.clone(),
            clips: Some(16),
            seed: Some(11),
            duration_range: None,
            config: None,
        })
        .map_err(|e| format!("{e:#}"))?;
        cmd_preprocess(&PreprocessArgs {
            manifest: wavs.join("manifest.csv"),
            out: data.clone(),
            test_split: Some(0.25),
            seed: Some(11),
            config: None,
        })
        .map_err(|e| format!("{e:#}"))?;
        let run = |name: &str| {
            let out = dir.path().join(name);
            cmd_train(&TrainArgs {
                data: data.clone(),
                out: out.clone(),
                folds: Some(2),
                epochs: Some(3),
                seed: Some(11),
                parallel_folds: Some(1),
                config: None,
            })
            .map_err(|e| format!("{e:#}"))?;
            Ok::<_, String>(out)
        };
        let a = run("a")?;
        let b = run("b")?;
        let mut bytes = 0;
        for file in [REPORT_JSON.to_string(), REPORT_TEXT.to_string(), checkpoint_name(0), checkpoint_name(1)] {
            let x = std::fs::read(a.join(&file)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&file)).map_err(|e| e.to_string())?;
            ensure(x == y, || format!("{file} differs between runs"))?;
            bytes += x.len();
        }
        // the checkpoint reproduces the reported test confusion
        let record = phonation::training::CheckpointRecord::load(a.join(checkpoint_name(0))).map_err(|e| e.to_string())?;
        let test = phonation::dataset::SegmentSet::load(data.join(phonation_cli::TEST_SEGMENTS)).map_err(|e| e.to_string())?;
        let cm = evaluate(&record.net, &test.segments).map_err(|e| e.to_string())?;
        let report: phonation_cli::TrainReport =
            serde_json::from_slice(&std::fs::read(a.join(REPORT_JSON)).unwrap()).map_err(|e| e.to_string())?;
        ensure(cm == report.metrics.folds[0].confusion, || "reloaded checkpoint disagrees with report".into())?;
        Ok(format!("reports and checkpoints identical ({bytes} bytes)"))
    });
}
