//! The 28 version-control features of a merge scenario.
//!
//! One merge-level feature (files changed on both sides) plus 27 branch-level
//! features computed over `ancestor..parent` for each parent, then combined
//! with a [`Operator`]. Feature order is frozen; see [`feature_names`] and the
//! shipped `feature-schema.json`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{self, ChangeKind, CommitId, CommitMeta, FileChange, GitError, RepoPath};
use crate::miner::MergeScenario;
use crate::Label;

pub const SCHEMA_VERSION: &str = "1";

/// Commit-message keywords, in vector order.
pub const KEYWORDS: [&str; 12] = [
    "fix", "bug", "feature", "improve", "document", "refactor", "update", "add", "remove", "use",
    "delete", "change",
];

pub const BRANCH_DIM: usize = 27;
/// Index of the merge-level feature in every vector.
pub const SIMULTANEOUS_FILES_INDEX: usize = 0;

const WEEK_SECS: i64 = 7 * 24 * 3600;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid range {ancestor}..{tip}: {detail}")]
    Range {
        ancestor: CommitId,
        tip: CommitId,
        detail: String,
    },
    #[error("extracting feature set #{feature_set}: {source}")]
    Extraction {
        feature_set: u8,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("unknown combination operator {0:?}")]
    Config(String),
    #[error(transparent)]
    Git(#[from] GitError),
}

fn range_error(ancestor: &CommitId, tip: &CommitId, e: impl fmt::Display) -> FeatureError {
    FeatureError::Range {
        ancestor: ancestor.clone(),
        tip: tip.clone(),
        detail: e.to_string(),
    }
}

fn in_set(feature_set: u8) -> impl FnOnce(FeatureError) -> FeatureError {
    move |e| FeatureError::Extraction {
        feature_set,
        source: Box::new(e),
    }
}

/// Rule for merging the two branch-level vectors of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Min,
    Max,
    Average,
    Median,
    #[default]
    #[serde(rename = "norm-1")]
    Norm1,
    #[serde(rename = "norm-2")]
    Norm2,
    Concatenation,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::Min,
        Operator::Max,
        Operator::Average,
        Operator::Median,
        Operator::Norm1,
        Operator::Norm2,
        Operator::Concatenation,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Operator::Min => "min",
            Operator::Max => "max",
            Operator::Average => "average",
            Operator::Median => "median",
            Operator::Norm1 => "norm-1",
            Operator::Norm2 => "norm-2",
            Operator::Concatenation => "concatenation",
        }
    }

    /// Length of a full feature vector under this operator.
    pub fn dimension(self) -> usize {
        1 + self.combined_dimension()
    }

    pub fn combined_dimension(self) -> usize {
        match self {
            Operator::Concatenation => 2 * BRANCH_DIM,
            _ => BRANCH_DIM,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != Operator::Concatenation
    }

    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            Operator::Min => x.min(y),
            Operator::Max => x.max(y),
            Operator::Average | Operator::Median => (x + y) / 2.0,
            Operator::Norm1 => x.abs() + y.abs(),
            Operator::Norm2 => x.hypot(y),
            Operator::Concatenation => unreachable!("concatenation is not element-wise"),
        }
    }
}

impl FromStr for Operator {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Ok(match key.as_str() {
            "min" | "minimum" => Operator::Min,
            "max" | "maximum" => Operator::Max,
            "avg" | "average" | "mean" => Operator::Average,
            "median" => Operator::Median,
            "norm-1" | "norm1" | "l1" => Operator::Norm1,
            "norm-2" | "norm2" | "l2" => Operator::Norm2,
            "concat" | "concatenation" => Operator::Concatenation,
            _ => return Err(FeatureError::Config(s.to_string())),
        })
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Branch-level features over one `ancestor..tip` range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchFeatures {
    pub commit_count: u64,
    pub commit_density_last_week: u64,
    /// Added, Deleted, Renamed, Modified, Copied.
    pub file_changes: [u64; 5],
    pub lines_added: u64,
    pub lines_deleted: u64,
    pub active_developers: u64,
    pub keyword_freqs: [u64; 12],
    pub msg_len_min: f64,
    pub msg_len_max: f64,
    pub msg_len_mean: f64,
    pub msg_len_median: f64,
    pub duration_hours: f64,
}

impl BranchFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(BRANCH_DIM);
        v.push(self.commit_count as f64);
        v.push(self.commit_density_last_week as f64);
        v.extend(self.file_changes.iter().map(|&c| c as f64));
        v.push(self.lines_added as f64);
        v.push(self.lines_deleted as f64);
        v.push(self.active_developers as f64);
        v.extend(self.keyword_freqs.iter().map(|&c| c as f64));
        v.extend([
            self.msg_len_min,
            self.msg_len_max,
            self.msg_len_mean,
            self.msg_len_median,
            self.duration_hours,
        ]);
        debug_assert_eq!(v.len(), BRANCH_DIM);
        v
    }
}

const BRANCH_FEATURES: [(&str, u8, &str); BRANCH_DIM] = [
    ("commits", 2, "count"),
    ("commits_last_week", 3, "count"),
    ("files_added", 4, "count"),
    ("files_deleted", 4, "count"),
    ("files_renamed", 4, "count"),
    ("files_modified", 4, "count"),
    ("files_copied", 4, "count"),
    ("lines_added", 5, "count"),
    ("lines_deleted", 5, "count"),
    ("active_developers", 6, "count"),
    ("kw_fix", 7, "count"),
    ("kw_bug", 7, "count"),
    ("kw_feature", 7, "count"),
    ("kw_improve", 7, "count"),
    ("kw_document", 7, "count"),
    ("kw_refactor", 7, "count"),
    ("kw_update", 7, "count"),
    ("kw_add", 7, "count"),
    ("kw_remove", 7, "count"),
    ("kw_use", 7, "count"),
    ("kw_delete", 7, "count"),
    ("kw_change", 7, "count"),
    ("msg_len_min", 8, "characters"),
    ("msg_len_max", 8, "characters"),
    ("msg_len_mean", 8, "characters"),
    ("msg_len_median", 8, "characters"),
    ("duration", 9, "hours"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub index: usize,
    pub name: String,
    pub feature_set: u8,
    pub unit: String,
}

/// Feature layout for `operator`.
pub fn feature_schema(operator: Operator) -> Vec<FeatureInfo> {
    let mut out = vec![FeatureInfo {
        index: 0,
        name: "simultaneously_changed_files".into(),
        feature_set: 1,
        unit: "count".into(),
    }];
    let prefixes: &[&str] = if operator == Operator::Concatenation {
        &["p1_", "p2_"]
    } else {
        &[""]
    };
    for prefix in prefixes {
        for (name, set, unit) in BRANCH_FEATURES {
            out.push(FeatureInfo {
                index: out.len(),
                name: format!("{prefix}{name}"),
                feature_set: set,
                unit: unit.into(),
            });
        }
    }
    out
}

pub fn feature_names(operator: Operator) -> Vec<String> {
    feature_schema(operator).into_iter().map(|f| f.name).collect()
}

/// Feature set (1..=9) of every column of a vector of length `dimension`.
pub fn feature_sets_for_dimension(dimension: usize) -> Option<Vec<u8>> {
    let op = match dimension {
        d if d == Operator::Norm1.dimension() => Operator::Norm1,
        d if d == Operator::Concatenation.dimension() => Operator::Concatenation,
        _ => return None,
    };
    Some(feature_schema(op).into_iter().map(|f| f.feature_set).collect())
}

/// JSON document describing the frozen feature layout for every operator.
pub fn schema_document() -> serde_json::Value {
    let layouts: serde_json::Map<String, serde_json::Value> = [Operator::Norm1, Operator::Concatenation]
        .into_iter()
        .map(|op| {
            let key = if op == Operator::Concatenation { "concatenation" } else { "element-wise" };
            (key.to_string(), serde_json::to_value(feature_schema(op)).unwrap())
        })
        .collect();
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "keywords": KEYWORDS,
        "operators": Operator::ALL.iter().map(|o| o.tag()).collect::<Vec<_>>(),
        "branch_range": "ancestor..parent",
        "file_and_line_changes": "endpoint diff ancestor -> parent with -M -C",
        "layouts": layouts,
    })
}

fn changed_paths(changes: &[FileChange]) -> BTreeSet<RepoPath> {
    let mut paths = BTreeSet::new();
    for c in changes {
        paths.insert(c.path.clone());
        if c.kind == ChangeKind::Renamed {
            if let Some(old) = &c.old_path {
                paths.insert(old.clone());
            }
        }
    }
    paths
}

fn check_range(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<(), FeatureError> {
    let out = git::run_git(
        repo,
        &["merge-base", "--is-ancestor", ancestor.as_str(), tip.as_str()],
        git::DEFAULT_TIMEOUT,
    )?;
    match out.exit_code {
        0 => Ok(()),
        1 => Err(range_error(ancestor, tip, "ancestor is not an ancestor of tip")),
        _ => Err(range_error(ancestor, tip, out.stderr_lossy().trim())),
    }
}

fn diff_in_range(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<Vec<FileChange>, FeatureError> {
    if ancestor == tip {
        return Ok(Vec::new());
    }
    git::diff_changes(repo, ancestor, tip).map_err(|e| range_error(ancestor, tip, e))
}

fn commits_in_range(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<Vec<CommitMeta>, FeatureError> {
    if ancestor == tip {
        return Ok(Vec::new());
    }
    git::log_range(repo, Some(ancestor), tip).map_err(|e| range_error(ancestor, tip, e))
}

/// Paths touched in `ancestor..tip`; renames contribute both paths.
pub fn changed_files(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<BTreeSet<RepoPath>, FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(changed_paths(&diff_in_range(repo, ancestor, tip)?))
}

pub fn simultaneous_changes(files1: &BTreeSet<RepoPath>, files2: &BTreeSet<RepoPath>) -> u64 {
    files1.intersection(files2).count() as u64
}

pub fn branch_commit_count(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<u64, FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(commits_in_range(repo, ancestor, tip)?.len() as u64)
}

fn density(commits: &[CommitMeta], tip: &CommitId) -> u64 {
    let Some(tip_time) = commits.iter().find(|c| &c.id == tip).map(|c| c.author_timestamp) else {
        return 0;
    };
    commits
        .iter()
        .filter(|c| c.author_timestamp >= tip_time - WEEK_SECS && c.author_timestamp <= tip_time)
        .count() as u64
}

/// Commits in range authored within the week before the tip's author time.
pub fn commit_density(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<u64, FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(density(&commits_in_range(repo, ancestor, tip)?, tip))
}

fn histogram(changes: &[FileChange]) -> [u64; 5] {
    let mut h = [0u64; 5];
    for c in changes {
        let slot = match c.kind {
            ChangeKind::Added => 0,
            ChangeKind::Deleted => 1,
            ChangeKind::Renamed => 2,
            ChangeKind::Modified => 3,
            ChangeKind::Copied => 4,
        };
        h[slot] += 1;
    }
    h
}

/// Added/Deleted/Renamed/Modified/Copied counts of the endpoint diff.
pub fn file_change_histogram(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<[u64; 5], FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(histogram(&diff_in_range(repo, ancestor, tip)?))
}

fn churn(changes: &[FileChange]) -> (u64, u64) {
    changes.iter().fold((0, 0), |(a, d), c| {
        (a + c.lines_added.unwrap_or(0), d + c.lines_deleted.unwrap_or(0))
    })
}

pub fn line_churn(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<(u64, u64), FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(churn(&diff_in_range(repo, ancestor, tip)?))
}

fn distinct_authors(commits: &[CommitMeta]) -> u64 {
    commits
        .iter()
        .map(|c| c.author_email.to_lowercase())
        .collect::<HashSet<_>>()
        .len() as u64
}

pub fn active_devs(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<u64, FeatureError> {
    check_range(repo, ancestor, tip)?;
    Ok(distinct_authors(&commits_in_range(repo, ancestor, tip)?))
}

/// Case-insensitive token-prefix keyword counts over all messages.
pub fn keyword_frequencies<S: AsRef<str>>(messages: &[S]) -> [u64; 12] {
    let mut counts = [0u64; 12];
    for msg in messages {
        for token in msg
            .as_ref()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let token = token.to_lowercase();
            for (slot, kw) in counts.iter_mut().zip(KEYWORDS) {
                if token.starts_with(kw) {
                    *slot += 1;
                }
            }
        }
    }
    counts
}

/// (min, max, mean, median) of message lengths in characters.
pub fn message_length_stats<S: AsRef<str>>(messages: &[S]) -> (f64, f64, f64, f64) {
    if messages.is_empty() {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let mut lens: Vec<usize> = messages.iter().map(|m| m.as_ref().chars().count()).collect();
    lens.sort_unstable();
    let n = lens.len();
    let sum: usize = lens.iter().sum();
    let median = if n % 2 == 1 {
        lens[n / 2] as f64
    } else {
        (lens[n / 2 - 1] + lens[n / 2]) as f64 / 2.0
    };
    (lens[0] as f64, lens[n - 1] as f64, sum as f64 / n as f64, median)
}

fn hours_between(from: i64, to: i64) -> f64 {
    ((to - from) as f64 / 3600.0).max(0.0)
}

pub fn branch_duration_hours(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<f64, FeatureError> {
    check_range(repo, ancestor, tip)?;
    if ancestor == tip {
        return Ok(0.0);
    }
    let a = git::commit_meta(repo, ancestor)?;
    let t = git::commit_meta(repo, tip)?;
    Ok(hours_between(a.author_timestamp, t.author_timestamp))
}

/// Everything read from git for one branch.
struct BranchData {
    commits: Vec<CommitMeta>,
    changes: Vec<FileChange>,
}

fn branch_features(data: &BranchData, tip: &CommitId, ancestor_time: i64) -> BranchFeatures {
    if data.commits.is_empty() {
        return BranchFeatures::default();
    }
    let messages: Vec<&str> = data.commits.iter().map(|c| c.message.as_str()).collect();
    let (msg_len_min, msg_len_max, msg_len_mean, msg_len_median) = message_length_stats(&messages);
    let (lines_added, lines_deleted) = churn(&data.changes);
    let tip_time = data
        .commits
        .iter()
        .find(|c| &c.id == tip)
        .map(|c| c.author_timestamp)
        .unwrap_or(ancestor_time);
    BranchFeatures {
        commit_count: data.commits.len() as u64,
        commit_density_last_week: density(&data.commits, tip),
        file_changes: histogram(&data.changes),
        lines_added,
        lines_deleted,
        active_developers: distinct_authors(&data.commits),
        keyword_freqs: keyword_frequencies(&messages),
        msg_len_min,
        msg_len_max,
        msg_len_mean,
        msg_len_median,
        duration_hours: hours_between(ancestor_time, tip_time),
    }
}

/// Combines two branch vectors; concatenation keeps (a, b) order.
pub fn combine(a: &BranchFeatures, b: &BranchFeatures, operator: Operator) -> Vec<f64> {
    combine_slices(&a.to_vec(), &b.to_vec(), operator)
}

pub fn combine_slices(a: &[f64], b: &[f64], operator: Operator) -> Vec<f64> {
    match operator {
        Operator::Concatenation => a.iter().chain(b).copied().collect(),
        op => a.iter().zip(b).map(|(&x, &y)| op.apply(x, y)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub repo: String,
    pub merge_commit: String,
}

impl fmt::Display for ScenarioKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.repo, self.merge_commit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub scenario_key: ScenarioKey,
    pub simultaneous_files: u64,
    pub combined: Vec<f64>,
    pub operator: Operator,
    pub label: Option<Label>,
    #[serde(skip)]
    pub branches: Option<(BranchFeatures, BranchFeatures)>,
}

impl FeatureVector {
    /// Full vector: the merge-level feature followed by the combined block.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.combined.len());
        v.push(self.simultaneous_files as f64);
        v.extend_from_slice(&self.combined);
        v
    }
}

fn read_branch(repo: &Path, ancestor: &CommitId, tip: &CommitId) -> Result<BranchData, FeatureError> {
    let commits = commits_in_range(repo, ancestor, tip).map_err(in_set(2))?;
    let changes = diff_in_range(repo, ancestor, tip).map_err(in_set(4))?;
    Ok(BranchData { commits, changes })
}

/// Extracts features of the two branches `ancestor..parent1` and
/// `ancestor..parent2`.
pub fn extract_between(
    repo: &Path,
    key: ScenarioKey,
    parent1: &CommitId,
    parent2: &CommitId,
    ancestor: &CommitId,
    operator: Operator,
) -> Result<FeatureVector, FeatureError> {
    check_range(repo, ancestor, parent1).map_err(in_set(1))?;
    check_range(repo, ancestor, parent2).map_err(in_set(1))?;
    let ancestor_time = git::commit_meta(repo, ancestor)
        .map_err(|e| range_error(ancestor, ancestor, e))
        .map_err(in_set(9))?
        .author_timestamp;
    let b1 = read_branch(repo, ancestor, parent1)?;
    let b2 = read_branch(repo, ancestor, parent2)?;
    let f1 = branch_features(&b1, parent1, ancestor_time);
    let f2 = branch_features(&b2, parent2, ancestor_time);
    let simultaneous_files =
        simultaneous_changes(&changed_paths(&b1.changes), &changed_paths(&b2.changes));
    Ok(FeatureVector {
        scenario_key: key,
        simultaneous_files,
        combined: combine(&f1, &f2, operator),
        operator,
        label: None,
        branches: Some((f1, f2)),
    })
}

pub fn extract_feature_vector(
    repo: &Path,
    scenario: &MergeScenario,
    operator: Operator,
    label: Option<Label>,
) -> Result<FeatureVector, FeatureError> {
    let key = ScenarioKey {
        repo: scenario.repo.clone(),
        merge_commit: scenario.merge_commit.to_string(),
    };
    let mut fv = extract_between(
        repo,
        key,
        &scenario.parent1,
        &scenario.parent2,
        &scenario.ancestor,
        operator,
    )?;
    fv.label = label;
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paths(items: &[&str]) -> BTreeSet<RepoPath> {
        items.iter().map(|&p| RepoPath::from(p)).collect()
    }

    #[test]
    fn simultaneous_change_counts() {
        assert_eq!(simultaneous_changes(&paths(&["a", "b"]), &paths(&["c"])), 0);
        assert_eq!(simultaneous_changes(&paths(&["a", "b"]), &paths(&["b", "c"])), 1);
        let s = paths(&["x", "y", "z"]);
        assert_eq!(simultaneous_changes(&s, &s), 3);
    }

    #[test]
    fn keywords_basic() {
        assert_eq!(keyword_frequencies::<&str>(&[]), [0; 12]);
        let k = keyword_frequencies(&["Fix bug", "fix typo"]);
        assert_eq!(k[0], 2);
        assert_eq!(k[1], 1);
        assert_eq!(k.iter().sum::<u64>(), 3);
    }

    #[test]
    fn keywords_prefix_and_case() {
        let k = keyword_frequencies(&["refactoring update"]);
        let mut expected = [0u64; 12];
        expected[5] = 1;
        expected[6] = 1;
        assert_eq!(k, expected);
        let k = keyword_frequencies(&["Fixed BUGS; removed-deleted changes, used features"]);
        assert_eq!(k, [1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn keywords_match_independent_regex_count() {
        // Each keyword counted by scanning tokens independently of the implementation.
        let msgs = ["Add docs; documented the Improvement", "prefix-add user usage", "misfix"];
        let k = keyword_frequencies(&msgs);
        let idx = |kw: &str| KEYWORDS.iter().position(|&k| k == kw).unwrap();
        assert_eq!(k[idx("add")], 2);
        assert_eq!(k[idx("document")], 1);
        assert_eq!(k[idx("improve")], 1);
        assert_eq!(k[idx("use")], 1);
        assert_eq!(k[idx("fix")], 0);
    }

    #[test]
    fn message_stats() {
        assert_eq!(message_length_stats::<&str>(&[]), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(message_length_stats(&["ab"]), (2.0, 2.0, 2.0, 2.0));
        assert_eq!(message_length_stats(&["ab", "abcd"]), (2.0, 4.0, 3.0, 3.0));
        let (min, max, mean, median) = message_length_stats(&["a", "ab", "abcdefghij"]);
        assert_eq!((min, max, median), (1.0, 10.0, 2.0));
        assert_eq!(mean, 13.0 / 3.0);
        // characters, not bytes
        assert_eq!(message_length_stats(&["héé"]).0, 3.0);
    }

    #[test]
    fn duration_floor() {
        assert_eq!(hours_between(0, 3600), 1.0);
        assert_eq!(hours_between(7200, 3600), 0.0);
    }

    #[test]
    fn operator_examples() {
        assert_eq!(combine_slices(&[3.0], &[4.0], Operator::Norm1), vec![7.0]);
        assert_eq!(combine_slices(&[3.0], &[4.0], Operator::Norm2), vec![5.0]);
        assert_eq!(combine_slices(&[1.0, 2.0], &[1.0, 2.0], Operator::Min), vec![1.0, 2.0]);
        assert_eq!(
            combine_slices(&[1.0], &[2.0], Operator::Concatenation),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn operator_tags_parse() {
        for op in Operator::ALL {
            assert_eq!(op.tag().parse::<Operator>().unwrap(), op);
        }
        assert!(matches!("norm-3".parse::<Operator>(), Err(FeatureError::Config(_))));
    }

    #[test]
    fn dimension_law() {
        for op in Operator::ALL {
            let expected = if op == Operator::Concatenation { 55 } else { 28 };
            assert_eq!(op.dimension(), expected);
            assert_eq!(feature_schema(op).len(), expected);
            let fv = combine(&BranchFeatures::default(), &BranchFeatures::default(), op);
            assert_eq!(1 + fv.len(), expected);
        }
    }

    #[test]
    fn schema_set_sizes() {
        let sets = feature_sets_for_dimension(28).unwrap();
        let sizes: Vec<usize> = (1..=9).map(|s| sets.iter().filter(|&&x| x == s).count()).collect();
        assert_eq!(sizes, [1, 1, 1, 5, 2, 1, 12, 4, 1]);
        assert!(feature_sets_for_dimension(27).is_none());
    }

    #[test]
    fn shipped_schema_matches_code() {
        let shipped: serde_json::Value =
            serde_json::from_str(include_str!("../feature-schema.json")).unwrap();
        assert_eq!(shipped, schema_document());
    }

    fn branch() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1e6, BRANCH_DIM)
    }

    proptest! {
        #[test]
        fn symmetric_operators_commute(a in branch(), b in branch()) {
            for op in Operator::ALL.into_iter().filter(|o| o.is_symmetric()) {
                prop_assert_eq!(combine_slices(&a, &b, op), combine_slices(&b, &a, op));
            }
        }

        #[test]
        fn operator_ordering(a in branch(), b in branch()) {
            let min = combine_slices(&a, &b, Operator::Min);
            let max = combine_slices(&a, &b, Operator::Max);
            let avg = combine_slices(&a, &b, Operator::Average);
            let med = combine_slices(&a, &b, Operator::Median);
            let l1 = combine_slices(&a, &b, Operator::Norm1);
            for i in 0..BRANCH_DIM {
                prop_assert!(min[i] <= avg[i] && avg[i] <= max[i]);
                prop_assert_eq!(med[i], avg[i]);
                prop_assert!(l1[i] >= max[i]);
            }
        }
    }
}
