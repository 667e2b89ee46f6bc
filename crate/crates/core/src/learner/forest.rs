use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{allowed_features, Grower};
use super::{derive_seed, HyperParams, LearnerError, TrainingData, TreeModel};
use crate::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub hyperparams: HyperParams,
    pub tree_seeds: Vec<u64>,
}

pub fn tree_seed(master: u64, tree_index: usize) -> u64 {
    derive_seed(master, tree_index as u64)
}

/// Bagged forest: each tree sees a bootstrap sample of size n and draws
/// `hp.feature_subset` candidate features at every node.
pub fn fit_forest(data: &TrainingData, hp: &HyperParams) -> Result<ForestModel, LearnerError> {
    hp.validate()?;
    if data.is_empty() {
        return Err(LearnerError::Training("empty dataset".into()));
    }
    let allowed = allowed_features(data, None)?;
    let per_node = hp.feature_subset.size(allowed.len());
    let tree_seeds: Vec<u64> = (0..hp.n_estimators).map(|i| tree_seed(hp.seed, i)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = data.len();
            let samples: Vec<usize> = if hp.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let nodes = Grower {
                data,
                hp,
                allowed: allowed.clone(),
                per_node,
                rng,
            }
            .grow(samples);
            TreeModel {
                nodes,
                n_features: data.n_features(),
                hyperparams: *hp,
                feature_mask: None,
            }
        })
        .collect();
    Ok(ForestModel {
        trees,
        hyperparams: *hp,
        tree_seeds,
    })
}

impl ForestModel {
    /// Majority vote (ties go to Clean) and the fraction of trees voting Conflict.
    pub fn predict(&self, x: &[f64]) -> Result<(Label, f64), LearnerError> {
        if self.trees.is_empty() {
            return Err(LearnerError::ModelState("forest has no trees".into()));
        }
        let mut conflict_votes = 0usize;
        for t in &self.trees {
            if t.predict(x)? == Label::Conflict {
                conflict_votes += 1;
            }
        }
        let clean_votes = self.trees.len() - conflict_votes;
        let label = if conflict_votes > clean_votes {
            Label::Conflict
        } else {
            Label::Clean
        };
        Ok((label, conflict_votes as f64 / self.trees.len() as f64))
    }

    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }
}
