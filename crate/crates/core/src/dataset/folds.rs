use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledClip, PhonationMode};

/// Per-clip fold assignment. Every segment of a clip inherits its fold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub n_folds: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, clip_id: &str) -> Option<usize> {
        self.assignments.get(clip_id).copied()
    }

    /// Clip ids in `fold`, sorted.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_folds(clips: &[LabeledClip], n_folds: usize, seed: u64) -> Result<FoldSplit, DatasetError> {
    if n_folds == 0 || clips.len() < n_folds {
        return Err(DatasetError::TooFewClips {
            clips: clips.len(),
            folds: n_folds,
        });
    }
    let mut ids: Vec<&str> = clips.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(DatasetError::DuplicatePath(w[0].to_string()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignments = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % n_folds))
        .collect();
    Ok(FoldSplit {
        n_folds,
        seed,
        assignments,
    })
}

/// Holds out `round(test_ratio · n)` clips of each mode for testing, chosen
/// by a seeded shuffle of that mode's sorted ids. Returns `(train, test)` in
/// input order.
pub fn split_train_test(
    clips: &[LabeledClip],
    test_ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledClip>, Vec<LabeledClip>), DatasetError> {
    if !(0.0..1.0).contains(&test_ratio) {
        return Err(DatasetError::InvalidConfig(format!(
            "test ratio {test_ratio} must lie in [0, 1)"
        )));
    }
    let mut test_ids = std::collections::BTreeSet::new();
    for mode in PhonationMode::ALL {
        let mut ids: Vec<&str> = clips
            .iter()
            .filter(|c| c.mode == mode)
            .map(|c| c.id.as_str())
            .collect();
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mode.index() as u64);
        ids.shuffle(&mut rng);
        let n_test = (test_ratio * ids.len() as f64).round() as usize;
        test_ids.extend(ids.into_iter().take(n_test));
    }
    Ok(clips
        .iter()
        .cloned()
        .partition(|c| !test_ids.contains(c.id.as_str())))
}
