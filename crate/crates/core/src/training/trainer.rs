use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lr_schedule, ConfusionMatrix, TrainConfig, TrainingError};
use crate::autodiff::{Adam, Tape, Tensor};
use crate::dataset::Segment;
use crate::model::PhonationNet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample cross-entropy over the epoch's mini-batches.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the selected epoch.
    pub net: PhonationNet,
    /// Optimizer state matching `net`.
    pub optimizer: Adam,
    /// Shuffle generator state at the end of the selected epoch.
    pub rng: ChaCha8Rng,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub history: Vec<EpochRecord>,
}

fn check_shape(net: &PhonationNet, segments: &[Segment]) -> Result<(), TrainingError> {
    let [_, bands, frames] = net.config().input;
    for s in segments {
        if s.bands != bands || s.frames != frames {
            return Err(TrainingError::ShapeMismatch {
                expected: [bands, frames],
                got: [s.bands, s.frames],
            });
        }
    }
    Ok(())
}

/// Stacks segments into a `[N, 1, bands, frames]` batch plus class labels.
pub fn segments_to_batch<'a>(
    segments: impl IntoIterator<Item = &'a Segment>,
) -> Result<(Tensor, Vec<usize>), TrainingError> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for s in segments {
        match shape {
            None => shape = Some((s.bands, s.frames)),
            Some(want) if want != (s.bands, s.frames) => {
                return Err(TrainingError::ShapeMismatch {
                    expected: [want.0, want.1],
                    got: [s.bands, s.frames],
                })
            }
            Some(_) => {}
        }
        data.extend_from_slice(&s.values);
        labels.push(s.mode.index());
    }
    let (bands, frames) = shape.ok_or(TrainingError::EmptyEvaluation)?;
    Ok((Tensor::new(&[labels.len(), 1, bands, frames], data)?, labels))
}

/// Argmax with ties resolved to the lowest index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(net: &PhonationNet, segments: &[Segment]) -> Result<ConfusionMatrix, TrainingError> {
    if segments.is_empty() {
        return Err(TrainingError::EmptyEvaluation);
    }
    check_shape(net, segments)?;
    let (batch, labels) = segments_to_batch(segments)?;
    let logits = net.predict(&batch)?;
    let mut cm = ConfusionMatrix::default();
    for (row, &truth) in logits.data().chunks_exact(net.config().classes).zip(&labels) {
        cm.record(truth, argmax(row));
    }
    Ok(cm)
}

/// Trains `net` for `config.epochs` epochs and returns the parameters from
/// the epoch with the highest validation accuracy (later epoch on ties). With
/// an empty validation set the final epoch is kept.
pub fn train_fold(
    net: PhonationNet,
    train: &[Segment],
    val: &[Segment],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainingError::EmptyTrainSet);
    }
    check_shape(&net, train)?;
    check_shape(&net, val)?;

    let mut net = net;
    let mut optimizer = Adam::new(config.adam(), net.parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, PhonationNet, Adam, ChaCha8Rng)> = None;

    for epoch in 0..config.epochs {
        let lr = lr_schedule(config, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (batch, labels) = segments_to_batch(chunk.iter().map(|&i| &train[i]))?;
            let mut tape = Tape::new();
            let x = tape.leaf(batch, false);
            let pass = net.forward(&mut tape, x)?;
            let loss = tape.softmax_cross_entropy(pass.logits, &labels)?;
            tape.backward(loss)?;
            loss_sum += tape.value(loss).data()[0] * labels.len() as f64;
            let grads: Vec<&Tensor> = pass
                .params
                .iter()
                .map(|&p| tape.grad(p).expect("every parameter feeds the loss"))
                .collect();
            let mut params: Vec<&mut Tensor> = net.parameters_mut().iter_mut().collect();
            optimizer.step(&mut params, &grads, lr)?;
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            let cm = evaluate(&net, val)?;
            Some(cm.trace() as f64 / cm.total() as f64)
        };
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_accuracy,
        });
        let score = val_accuracy.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().map_or(true, |b| score >= b.1) {
            best = Some((epoch, score, net.clone(), optimizer.clone(), rng.clone()));
        }
    }

    Ok(match best {
        Some((epoch, score, net, optimizer, rng)) => TrainOutcome {
            net,
            optimizer,
            rng,
            best_epoch: Some(epoch),
            best_val_accuracy: score.is_finite().then_some(score),
            history,
        },
        None => TrainOutcome {
            net,
            optimizer,
            rng,
            best_epoch: None,
            best_val_accuracy: None,
            history,
        },
    })
}
