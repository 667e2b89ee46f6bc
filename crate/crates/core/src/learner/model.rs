use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Classifier, ForestModel, HyperParams, LearnerError, ModelSpec, PriorModel, TreeModel,
};
use crate::features::{Operator, SCHEMA_VERSION};
use crate::Label;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Prior(PriorModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    /// Fraction of trees voting Conflict (1/0 for single trees, the prior for
    /// the random baseline).
    pub vote_fraction: f64,
}

impl Model {
    /// `rng` is only consumed by the random baseline.
    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Prediction, LearnerError> {
        Ok(match self {
            Model::Tree(t) => {
                let label = t.predict(x)?;
                Prediction {
                    label,
                    vote_fraction: if label.is_conflict() { 1.0 } else { 0.0 },
                }
            }
            Model::Forest(f) => {
                let (label, vote_fraction) = f.predict(x)?;
                Prediction {
                    label,
                    vote_fraction,
                }
            }
            Model::Prior(p) => Prediction {
                label: p.predict(rng),
                vote_fraction: p.conflict_prior,
            },
        })
    }

    /// Expected input length, if the model constrains it.
    pub fn n_features(&self) -> Option<usize> {
        match self {
            Model::Tree(t) => Some(t.n_features),
            Model::Forest(f) => Some(f.n_features()),
            Model::Prior(_) => None,
        }
    }
}

/// Versioned on-disk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub classifier: Classifier,
    pub schema_version: String,
    pub operator: Option<Operator>,
    pub language: Option<String>,
    pub n_features: usize,
    pub hyperparams: HyperParams,
    pub seed: u64,
    pub dataset_fingerprint: Option<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(spec: &ModelSpec, model: Model, operator: Option<Operator>, n_features: usize) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            classifier: spec.classifier,
            schema_version: SCHEMA_VERSION.into(),
            operator,
            language: None,
            n_features,
            hyperparams: spec.hyperparams,
            seed: spec.hyperparams.seed,
            dataset_fingerprint: None,
            model,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.classifier, self.hyperparams)
    }

    /// Checks that feature vectors produced under `operator` fit this model.
    pub fn check_schema(&self, operator: Option<Operator>, dimension: usize) -> Result<(), LearnerError> {
        if dimension != self.n_features {
            return Err(LearnerError::Schema {
                expected: self.n_features,
                found: dimension,
            });
        }
        if let (Some(mine), Some(theirs)) = (self.operator, operator) {
            if mine != theirs {
                return Err(LearnerError::Format(format!(
                    "model was trained on {mine} features, data uses {theirs}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ModelFile, LearnerError> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| LearnerError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::Format(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.schema_version != SCHEMA_VERSION {
            return Err(LearnerError::Format(format!(
                "model feature schema {} does not match {SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| LearnerError::Format(e.to_string()))?;
        }
        fs::write(path, self.to_json()).map_err(|e| LearnerError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ModelFile, LearnerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| LearnerError::Format(format!("{}: {e}", path.display())))?;
        ModelFile::from_json(&text)
    }
}
