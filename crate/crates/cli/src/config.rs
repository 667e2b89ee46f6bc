//! Run configuration read from a TOML file and overridden by flags.
//!
//! ```toml
//! workdir = "work"
//! catalog = "repos.csv"
//! dataset = "work/dataset"
//! merge_limit = 1000
//! operator = "norm-1"
//! k = 10
//! seed = 0
//! language = "Java"
//! jobs = 4
//!
//! [hyperparams]
//! min_samples_leaf = 10
//! min_samples_split = 5
//! max_depth = 7
//! n_estimators = 75
//!
//! [grid]
//! min_samples_leaf = [2, 5, 10]
//! min_samples_split = [2, 5]
//! max_depth = [3, 7]
//! n_estimators = [10, 75]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use premerge_core::learner::{Grid, HyperParams};
use premerge_core::miner::DEFAULT_MERGE_LIMIT;
use premerge_core::Operator;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParamsConfig {
    pub min_samples_leaf: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub n_estimators: Option<usize>,
    pub conflict_weight: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min_samples_leaf: Option<Vec<usize>>,
    pub min_samples_split: Option<Vec<usize>>,
    pub max_depth: Option<Vec<usize>>,
    pub n_estimators: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workdir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub merge_limit: Option<usize>,
    pub operator: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub language: Option<String>,
    pub jobs: Option<usize>,
    pub size_cap_bytes: Option<u64>,
    #[serde(default)]
    pub hyperparams: HyperParamsConfig,
    pub grid: Option<GridConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn merge_limit(&self) -> usize {
        self.merge_limit.unwrap_or(DEFAULT_MERGE_LIMIT)
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(10)
    }

    pub fn operator(&self) -> Result<Operator> {
        match &self.operator {
            Some(s) => s.parse().map_err(|_| anyhow::anyhow!("unknown operator {s:?}")),
            None => Ok(Operator::Norm1),
        }
    }

    pub fn hyperparams(&self) -> HyperParams {
        let d = HyperParams::default();
        let h = &self.hyperparams;
        HyperParams {
            min_samples_leaf: h.min_samples_leaf.unwrap_or(d.min_samples_leaf),
            min_samples_split: h.min_samples_split.unwrap_or(d.min_samples_split),
            max_depth: h.max_depth.unwrap_or(d.max_depth),
            n_estimators: h.n_estimators.unwrap_or(d.n_estimators),
            conflict_weight: h.conflict_weight.unwrap_or(d.conflict_weight),
            ..d
        }
    }

    /// Configured grid with unspecified axes taken from the default grid.
    pub fn grid(&self) -> Grid {
        let d = Grid::default();
        match &self.grid {
            None => d,
            Some(g) => Grid {
                min_samples_leaf: g.min_samples_leaf.clone().unwrap_or(d.min_samples_leaf),
                min_samples_split: g.min_samples_split.clone().unwrap_or(d.min_samples_split),
                max_depth: g.max_depth.clone().unwrap_or(d.max_depth),
                n_estimators: g.n_estimators.clone().unwrap_or(d.n_estimators),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.merge_limit(), 1000);
        assert_eq!(c.k(), 10);
        assert_eq!(c.operator().unwrap(), Operator::Norm1);
        assert_eq!(c.hyperparams(), HyperParams::new(10, 5, 7, 75));
        assert_eq!(c.grid(), Grid::default());
    }

    #[test]
    fn parses_documented_example() {
        let text = include_str!("config.rs")
            .lines()
            .filter_map(|l| l.strip_prefix("//! "))
            .skip_while(|l| !l.starts_with("```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("```"))
            .collect::<Vec<_>>()
            .join("\n");
        let c: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(c.language.as_deref(), Some("Java"));
        assert_eq!(c.grid().n_estimators, vec![10, 75]);
        assert_eq!(c.hyperparams().n_estimators, 75);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
