use super::{
    evaluate, metrics_from_confusion, train_fold, ConfusionMatrix, FoldMetrics, MetricsReport,
    TrainConfig, TrainOutcome, TrainingError,
};
use crate::dataset::{DatasetError, FoldSplit, Segment};
use crate::model::{NetworkConfig, PhonationNet};

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub fold: usize,
    pub outcome: TrainOutcome,
    pub test_confusion: ConfusionMatrix,
    pub metrics: FoldMetrics,
    pub train_segments: usize,
    pub val_segments: usize,
}

#[derive(Clone, Debug)]
pub struct CrossValidation {
    pub report: MetricsReport,
    pub folds: Vec<FoldResult>,
}

/// Splits segments into (training, validation) for `fold` using each
/// segment's clip id, so no clip contributes to both sides.
pub fn split_by_fold(
    segments: &[Segment],
    split: &FoldSplit,
    fold: usize,
) -> Result<(Vec<Segment>, Vec<Segment>), TrainingError> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for s in segments {
        let f = split.fold_of(&s.origin.clip_id).ok_or_else(|| {
            DatasetError::InvalidConfig(format!("clip {:?} has no fold", s.origin.clip_id))
        })?;
        if f == fold {
            val.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, val))
}

fn run_fold(
    fold: usize,
    segments: &[Segment],
    split: &FoldSplit,
    test: &[Segment],
    network: &NetworkConfig,
    config: &TrainConfig,
) -> Result<FoldResult, TrainingError> {
    let (train, val) = split_by_fold(segments, split, fold)?;
    let net = PhonationNet::build(NetworkConfig {
        seed: network.seed.wrapping_add(fold as u64),
        ..network.clone()
    })?;
    let fold_config = TrainConfig {
        seed: config.seed.wrapping_add(fold as u64),
        ..config.clone()
    };
    let outcome = train_fold(net, &train, &val, &fold_config)?;
    let test_confusion = evaluate(&outcome.net, test)?;
    let metrics = FoldMetrics {
        fold,
        best_epoch: outcome.best_epoch,
        val_accuracy: outcome.best_val_accuracy,
        confusion: test_confusion,
        metrics: metrics_from_confusion(&test_confusion, config.f_average)?,
    };
    Ok(FoldResult {
        fold,
        outcome,
        test_confusion,
        metrics,
        train_segments: train.len(),
        val_segments: val.len(),
    })
}

/// Trains one fresh network per fold and evaluates each on the external
/// `test` set. Fold `k` uses seeds `network.seed + k` and `config.seed + k`,
/// so results do not depend on `workers`.
pub fn cross_validate(
    segments: &[Segment],
    split: &FoldSplit,
    test: &[Segment],
    network: &NetworkConfig,
    config: &TrainConfig,
    workers: usize,
) -> Result<CrossValidation, TrainingError> {
    config.validate()?;
    if test.is_empty() {
        return Err(TrainingError::EmptyEvaluation);
    }
    let n = split.n_folds;
    let workers = workers.clamp(1, n.max(1));
    let mut results: Vec<FoldResult> = if workers == 1 {
        (0..n)
            .map(|k| run_fold(k, segments, split, test, network, config))
            .collect::<Result<_, _>>()?
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    scope.spawn(move || {
                        (w..n)
                            .step_by(workers)
                            .map(|k| run_fold(k, segments, split, test, network, config))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(n);
            for h in handles {
                all.extend(h.join().expect("fold worker panicked")?);
            }
            Ok::<_, TrainingError>(all)
        })?
    };
    results.sort_by_key(|r| r.fold);
    let report = MetricsReport::from_folds(
        results.iter().map(|r| r.metrics.clone()).collect(),
        config.f_average,
    );
    Ok(CrossValidation {
        report,
        folds: results,
    })
}
