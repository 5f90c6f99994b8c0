//! Central finite-difference verification of tape gradients.
//!
//! The numeric side only ever runs forward passes; it never touches the
//! backward implementation it is checking. A probe whose `±step` interval
//! crosses a ReLU or max-pool switch (detected through
//! [`Tape::branch_pattern`]) has no valid central difference; it is counted
//! and replaced by another coordinate.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

const CANDIDATES_PER_PROBE: usize = 10;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Checked probes per input tensor (fewer only if the tensor runs out of
    /// usable coordinates).
    pub probes: usize,
    /// Probes with an analytic gradient at or below this magnitude are skipped.
    pub min_magnitude: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            probes: 20,
            min_magnitude: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: Vec<Probe>,
    /// Coordinates with an analytic gradient below `min_magnitude`.
    pub skipped: usize,
    /// Coordinates whose difference interval straddles a non-smooth point.
    pub kinks: usize,
    /// Inputs that ran out of usable coordinates before reaching `probes`.
    pub exhausted: Vec<usize>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.checked
            .iter()
            .map(Probe::relative_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.checked
            .iter()
            .max_by(|a, b| a.relative_error().total_cmp(&b.relative_error()))
    }
}

/// Compare analytic gradients of the scalar built by `f` against central
/// differences at randomly chosen coordinates of every input.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    f: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
        .collect();

    let base_pattern = tape.branch_pattern();
    let eval = |perturbed: &[Tensor]| -> Result<(f64, bool), TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape
            .value(out)
            .item()
            .ok_or_else(|| TensorError::NotScalar(tape.value(out).shape().to_vec()))?;
        Ok((value, tape.branch_pattern() == base_pattern))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let candidates = input.len().min(opts.probes.saturating_mul(CANDIDATES_PER_PROBE));
        let mut found = 0;
        for index in sample(&mut rng, input.len(), candidates).into_iter() {
            if found == opts.probes {
                break;
            }
            let a = analytic[which].data()[index];
            if a.abs() <= opts.min_magnitude {
                report.skipped += 1;
                continue;
            }
            let original = input.data()[index];
            work[which].data_mut()[index] = original + opts.step;
            let (plus, plus_smooth) = eval(&work)?;
            work[which].data_mut()[index] = original - opts.step;
            let (minus, minus_smooth) = eval(&work)?;
            work[which].data_mut()[index] = original;
            if !(plus_smooth && minus_smooth) {
                report.kinks += 1;
                continue;
            }
            found += 1;
            report.checked.push(Probe {
                input: which,
                index,
                analytic: a,
                numeric: (plus - minus) / (2.0 * opts.step),
            });
        }
        if found < opts.probes {
            report.exhausted.push(which);
        }
    }
    Ok(report)
}
