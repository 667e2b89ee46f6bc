use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_tree, HyperParams, LearnerError, TrainingData, TreeModel};
use crate::features::SIMULTANEOUS_FILES_INDEX;
use crate::Label;

/// Random labeller that predicts Conflict with the training conflict rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub conflict_prior: f64,
}

impl PriorModel {
    pub fn predict<R: Rng + ?Sized>(&self, rng: &mut R) -> Label {
        if rng.gen::<f64>() < self.conflict_prior {
            Label::Conflict
        } else {
            Label::Clean
        }
    }
}

pub fn fit_baseline1(data: &TrainingData) -> Result<PriorModel, LearnerError> {
    let conflict_prior = data
        .conflict_fraction()
        .ok_or_else(|| LearnerError::Training("empty dataset".into()))?;
    Ok(PriorModel { conflict_prior })
}

/// Decision tree that may only split on the simultaneously-changed-files feature.
pub fn fit_baseline2(data: &TrainingData, hp: &HyperParams) -> Result<TreeModel, LearnerError> {
    fit_tree(data, hp, Some(&[SIMULTANEOUS_FILES_INDEX]))
}
