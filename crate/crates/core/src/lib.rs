//! Merge conflict prediction from lightweight version-control features.
//!
//! The pipeline mines 3-way merge scenarios from git history, labels each by
//! replaying the merge, extracts 28 features per scenario and trains tree
//! classifiers that flag merges likely to conflict.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod analytics;
pub mod catalog;
pub mod dataset;
pub mod evaluator;
pub mod features;
pub mod git;
pub mod learner;
pub mod miner;
pub mod pipeline;

pub use features::Operator;

/// Ground truth or predicted outcome of a merge scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Conflict,
    /// A merge without textual conflict ("safe").
    Clean,
}

impl Label {
    pub fn is_conflict(self) -> bool {
        self == Label::Conflict
    }

    pub fn other(self) -> Label {
        match self {
            Label::Conflict => Label::Clean,
            Label::Clean => Label::Conflict,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Conflict => "conflict",
            Label::Clean => "clean",
        })
    }
}
