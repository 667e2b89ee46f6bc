//! Tree classifiers for conflict prediction: CART decision trees, bagged
//! random forests, the two baselines and a grid search over their
//! hyper-parameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::Label;

mod baseline;
mod forest;
pub mod grid;
mod model;
mod tree;

pub use baseline::{fit_baseline1, fit_baseline2, PriorModel};
pub use forest::{fit_forest, tree_seed, ForestModel};
pub use grid::{grid_search, CvRow, Grid, GridResult};
pub use model::{Model, ModelFile, Prediction, MODEL_FORMAT_VERSION};
pub use tree::{best_split, fit_tree, gini, ClassTally, Node, SplitCandidate, SplitNode, TreeModel};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training failed: {0}")]
    Training(String),
    #[error("invalid hyper-parameters: {0}")]
    HyperParams(String),
    #[error("schema mismatch: model expects {expected} features, got {found}")]
    Schema { expected: usize, found: usize },
    #[error("model state: {0}")]
    ModelState(String),
    #[error(transparent)]
    Fold(#[from] crate::evaluator::EvalError),
    #[error("model file: {0}")]
    Format(String),
}

/// Rows and labels handed to the learners.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    n_features: usize,
}

impl TrainingData {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<TrainingData, LearnerError> {
        if rows.len() != labels.len() {
            return Err(LearnerError::Training(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n_features) {
            return Err(LearnerError::Schema {
                expected: n_features,
                found: rows[bad].len(),
            });
        }
        if rows.iter().flatten().any(|v| v.is_nan()) {
            return Err(LearnerError::Training("NaN feature value".into()));
        }
        Ok(TrainingData {
            rows,
            labels,
            n_features,
        })
    }

    pub fn from_dataset(ds: &LabeledDataset) -> Result<TrainingData, LearnerError> {
        TrainingData::new(ds.rows(), ds.labels())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.rows[row][feature]
    }

    pub fn label(&self, row: usize) -> Label {
        self.labels[row]
    }

    /// Copies the given rows (repeats allowed) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> TrainingData {
        TrainingData {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
        }
    }

    pub fn conflict_fraction(&self) -> Option<f64> {
        let n = self.labels.len();
        (n > 0).then(|| self.labels.iter().filter(|l| l.is_conflict()).count() as f64 / n as f64)
    }
}

/// Features considered at each node of a forest tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    All,
    /// ⌈√d⌉ features.
    Sqrt,
    Count(usize),
}

impl FeatureSubset {
    pub fn size(self, available: usize) -> usize {
        let k = match self {
            FeatureSubset::All => available,
            FeatureSubset::Sqrt => (available as f64).sqrt().ceil() as usize,
            FeatureSubset::Count(k) => k,
        };
        k.clamp(1, available.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: usize,
    pub n_estimators: usize,
    pub feature_subset: FeatureSubset,
    pub seed: u64,
    /// Draw a bootstrap sample per forest tree.
    pub bootstrap: bool,
    /// Integer weight of the conflict class in impurity computations; 1 = unweighted.
    pub conflict_weight: u32,
}

impl Default for HyperParams {
    /// Leaf 10, split 5, depth 7, 75 estimators.
    fn default() -> Self {
        HyperParams {
            min_samples_leaf: 10,
            min_samples_split: 5,
            max_depth: 7,
            n_estimators: 75,
            feature_subset: FeatureSubset::Sqrt,
            seed: 0,
            bootstrap: true,
            conflict_weight: 1,
        }
    }
}

impl HyperParams {
    pub fn new(min_samples_leaf: usize, min_samples_split: usize, max_depth: usize, n_estimators: usize) -> Self {
        HyperParams {
            min_samples_leaf,
            min_samples_split,
            max_depth,
            n_estimators,
            ..HyperParams::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let checks = [
            (self.min_samples_leaf >= 1, "min_samples_leaf must be >= 1"),
            (self.min_samples_split >= 2, "min_samples_split must be >= 2"),
            (self.max_depth >= 1, "max_depth must be >= 1"),
            (self.n_estimators >= 1, "n_estimators must be >= 1"),
            (self.conflict_weight >= 1, "conflict_weight must be >= 1"),
            (
                !matches!(self.feature_subset, FeatureSubset::Count(0)),
                "feature subset size must be >= 1",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(LearnerError::HyperParams((*msg).into())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    DecisionTree,
    RandomForest,
    /// Stratified random labelling at the training conflict rate.
    Baseline1,
    /// Decision tree restricted to the simultaneously-changed-files feature.
    Baseline2,
}

impl Classifier {
    pub fn short_name(self) -> &'static str {
        match self {
            Classifier::DecisionTree => "dt",
            Classifier::RandomForest => "rf",
            Classifier::Baseline1 => "baseline1",
            Classifier::Baseline2 => "baseline2",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Classifier::DecisionTree => "Decision Tree",
            Classifier::RandomForest => "Random Forest",
            Classifier::Baseline1 => "Baseline #1",
            Classifier::Baseline2 => "Baseline #2",
        }
    }
}

impl FromStr for Classifier {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "dt" | "tree" | "decision-tree" | "decision_tree" => Classifier::DecisionTree,
            "rf" | "forest" | "random-forest" | "random_forest" => Classifier::RandomForest,
            "baseline1" | "b1" => Classifier::Baseline1,
            "baseline2" | "b2" => Classifier::Baseline2,
            other => return Err(LearnerError::HyperParams(format!("unknown classifier {other:?}"))),
        })
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// What to train: classifier kind plus hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub classifier: Classifier,
    pub hyperparams: HyperParams,
}

impl ModelSpec {
    pub fn new(classifier: Classifier, hyperparams: HyperParams) -> Self {
        ModelSpec {
            classifier,
            hyperparams,
        }
    }

    pub fn fit(&self, data: &TrainingData) -> Result<Model, LearnerError> {
        Ok(match self.classifier {
            Classifier::DecisionTree => Model::Tree(fit_tree(data, &self.hyperparams, None)?),
            Classifier::RandomForest => Model::Forest(fit_forest(data, &self.hyperparams)?),
            Classifier::Baseline1 => Model::Prior(fit_baseline1(data)?),
            Classifier::Baseline2 => Model::Tree(fit_baseline2(data, &self.hyperparams)?),
        })
    }

    pub fn describe(&self) -> String {
        let hp = &self.hyperparams;
        match self.classifier {
            Classifier::Baseline1 => self.classifier.display_name().to_string(),
            Classifier::RandomForest => format!(
                "{} (leaf {}, split {}, depth {}, estimators {}, seed {})",
                self.classifier.display_name(),
                hp.min_samples_leaf,
                hp.min_samples_split,
                hp.max_depth,
                hp.n_estimators,
                hp.seed
            ),
            _ => format!(
                "{} (leaf {}, split {}, depth {})",
                self.classifier.display_name(),
                hp.min_samples_leaf,
                hp.min_samples_split,
                hp.max_depth
            ),
        }
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(1)))
}
