use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::dataset::PhonationMode;

const K: usize = PhonationMode::COUNT;

/// Counts indexed `[true class][predicted class]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }
}

/// How per-class F-measures are combined into one number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FAverage {
    /// Unweighted mean over the four classes.
    #[default]
    Macro,
    /// Mean weighted by each class's true count.
    Weighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// 0 when the class is never predicted.
    pub precision: f64,
    /// 0 when the class never occurs.
    pub recall: f64,
    /// 0 when precision + recall is 0.
    pub f_measure: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f_measure: f64,
    pub per_class: [ClassMetrics; K],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix, average: FAverage) -> Result<Metrics, TrainingError> {
    let total = cm.total();
    if total == 0 {
        return Err(TrainingError::EmptyEvaluation);
    }
    let per_class: [ClassMetrics; K] = std::array::from_fn(|c| {
        let tp = cm.counts[c][c];
        let predicted: u64 = (0..K).map(|r| cm.counts[r][c]).sum();
        let support: u64 = cm.counts[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f_measure = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f_measure,
            support,
        }
    });
    let f_measure = match average {
        FAverage::Macro => per_class.iter().map(|c| c.f_measure).sum::<f64>() / K as f64,
        FAverage::Weighted => {
            per_class
                .iter()
                .map(|c| c.f_measure * c.support as f64)
                .sum::<f64>()
                / total as f64
        }
    };
    Ok(Metrics {
        accuracy: ratio(cm.trace(), total),
        f_measure,
        per_class,
    })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    /// Epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub val_accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub average: FAverage,
    pub folds: Vec<FoldMetrics>,
    pub accuracy: Summary,
    pub f_measure: Summary,
}

impl MetricsReport {
    pub fn from_folds(folds: Vec<FoldMetrics>, average: FAverage) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.metrics.accuracy).collect();
        let f: Vec<f64> = folds.iter().map(|f| f.metrics.f_measure).collect();
        Self {
            average,
            accuracy: Summary::of(&acc),
            f_measure: Summary::of(&f),
            folds,
        }
    }

    /// Plain-text table: one line per fold, then the aggregate with the
    /// standard deviation in brackets.
    pub fn to_text(&self) -> String {
        let label = match self.average {
            FAverage::Macro => "macro-F",
            FAverage::Weighted => "weighted-F",
        };
        let mut out = String::new();
        for f in &self.folds {
            let best = f.best_epoch.map_or_else(|| "-".to_string(), |e| e.to_string());
            out.push_str(&format!(
                "fold {:>2}  accuracy {:.4}  {label} {:.4}  best epoch {best}\n",
                f.fold, f.metrics.accuracy, f.metrics.f_measure
            ));
        }
        out.push_str(&format!(
            "mean     accuracy {:.4} ({:.4})  {label} {:.4} ({:.4})\n",
            self.accuracy.mean, self.accuracy.std, self.f_measure.mean, self.f_measure.std
        ));
        out
    }
}
