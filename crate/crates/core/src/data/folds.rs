//! Patient-level k-fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Patients outside fold `i`, in plan order.
    pub fn training_ids(&self, i: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }

    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|f| f.iter().any(|p| p == patient_id))
    }
}

/// Shuffles patient ids with a seeded generator and deals them round-robin
/// into `k` folds, so fold sizes differ by at most one.
pub fn kfold_split(patient_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > patient_ids.len() {
        return Err(Error::Config(format!(
            "k = {k} folds needs 2 ≤ k ≤ {} patients",
            patient_ids.len()
        )));
    }
    let mut ids = patient_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { seed, folds })
}
