//! Exhaustive hyper-parameter search scored by k-fold cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, HyperParams, LearnerError, ModelSpec, TrainingData};
use crate::evaluator::{cross_validate_folds, stratified_folds, ClassMetrics};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub n_estimators: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            min_samples_leaf: vec![2, 5, 10, 20, 35, 50],
            min_samples_split: vec![2, 3, 5, 10, 20, 35, 50, 75],
            max_depth: vec![1, 3, 5, 7, 11],
            n_estimators: vec![1, 3, 10, 50, 75, 100, 200, 300],
        }
    }
}

impl Grid {
    pub fn single(hp: &HyperParams) -> Grid {
        Grid {
            min_samples_leaf: vec![hp.min_samples_leaf],
            min_samples_split: vec![hp.min_samples_split],
            max_depth: vec![hp.max_depth],
            n_estimators: vec![hp.n_estimators],
        }
    }

    /// All cells for `classifier`, taking other settings from `base`.
    /// Estimator counts are collapsed to one value for single-tree learners.
    pub fn cells(&self, classifier: Classifier, base: &HyperParams) -> Vec<HyperParams> {
        let estimators: Vec<usize> = match classifier {
            Classifier::RandomForest => self.n_estimators.clone(),
            _ => vec![base.n_estimators],
        };
        let mut out = Vec::new();
        for &leaf in &self.min_samples_leaf {
            for &split in &self.min_samples_split {
                for &depth in &self.max_depth {
                    for &est in &estimators {
                        out.push(HyperParams {
                            min_samples_leaf: leaf,
                            min_samples_split: split,
                            max_depth: depth,
                            n_estimators: est,
                            ..*base
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub hyperparams: HyperParams,
    /// Selection objective: mean conflict-class f1 across folds.
    pub mean_conflict_f1: f64,
    pub fold_mean: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: HyperParams,
    pub objective: String,
    pub k: usize,
    pub table: Vec<CvRow>,
}

/// Better objective wins; on equal objective the smaller model wins
/// (fewer estimators, then shallower, then earlier in the grid).
fn better(a: &CvRow, b: &CvRow) -> bool {
    if a.mean_conflict_f1 != b.mean_conflict_f1 {
        return a.mean_conflict_f1 > b.mean_conflict_f1;
    }
    let key = |r: &CvRow| (r.hyperparams.n_estimators, r.hyperparams.max_depth);
    key(a) < key(b)
}

pub fn grid_search(
    data: &TrainingData,
    classifier: Classifier,
    base: &HyperParams,
    grid: &Grid,
    k: usize,
    seed: u64,
) -> Result<GridResult, LearnerError> {
    let cells = grid.cells(classifier, base);
    if cells.is_empty() {
        return Err(LearnerError::HyperParams("empty grid".into()));
    }
    for c in &cells {
        c.validate()?;
    }
    let folds = stratified_folds(data.labels(), k, seed)?;
    let table: Vec<CvRow> = cells
        .par_iter()
        .map(|hp| {
            let spec = ModelSpec::new(classifier, *hp);
            let (_, reports) = cross_validate_folds(&spec, data, &folds, seed)?;
            let n = reports.len() as f64;
            let mut mean = ClassMetrics::default();
            for r in &reports {
                mean.conflict.precision += r.metrics.conflict.precision / n;
                mean.conflict.recall += r.metrics.conflict.recall / n;
                mean.conflict.f1 += r.metrics.conflict.f1 / n;
                mean.safe.precision += r.metrics.safe.precision / n;
                mean.safe.recall += r.metrics.safe.recall / n;
                mean.safe.f1 += r.metrics.safe.f1 / n;
            }
            Ok(CvRow {
                hyperparams: *hp,
                mean_conflict_f1: mean.conflict.f1,
                fold_mean: mean,
            })
        })
        .collect::<Result<_, crate::evaluator::EvalError>>()?;
    let mut best = &table[0];
    for row in &table[1..] {
        if better(row, best) {
            best = row;
        }
    }
    Ok(GridResult {
        best: best.hyperparams,
        objective: "mean conflict f1".into(),
        k,
        table,
    })
}
