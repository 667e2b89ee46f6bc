//! Merge scenario enumeration and conflict labelling by replaying merges.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::LocalRepo;
use crate::git::{self, CommitId, GitError, LOG_FORMAT};

/// Printed by `git merge` (C locale) when conflicts stop the merge.
pub const CONFLICT_PHRASE: &str = "Automatic merge failed; fix conflicts and then commit the result";

pub const DEFAULT_MERGE_LIMIT: usize = 1000;

/// Identity git requires even for `merge --no-commit`; nothing is committed.
const REPLAY_IDENTITY: (&str, &str) = ("premerge", "premerge@localhost");

#[derive(Debug, Error)]
pub enum MinerError {
    #[error(transparent)]
    Git(#[from] GitError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("worktree {path} could not be restored: {detail}")]
    Restore { path: PathBuf, detail: String },
    #[error("worktree {0} is quarantined after a failed restore")]
    Quarantined(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeScenario {
    pub repo: String,
    pub merge_commit: CommitId,
    pub parent1: CommitId,
    pub parent2: CommitId,
    pub ancestor: CommitId,
    /// Author time of the merge commit, unix seconds.
    pub merge_timestamp: i64,
    /// More than one merge base existed; `ancestor` is the first reported.
    #[serde(default)]
    pub multi_base: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Conflict,
    Clean,
    ReplayError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeLabel {
    pub outcome: Outcome,
    pub conflicting_paths: Vec<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeBase {
    pub base: CommitId,
    /// All bases reported by `git merge-base --all`, in git's order.
    pub candidates: Vec<CommitId>,
}

impl MergeBase {
    pub fn is_multi(&self) -> bool {
        self.candidates.len() > 1
    }
}

/// Merge base of two commits, `None` for unrelated histories.
pub fn find_ancestor(repo: &Path, p1: &CommitId, p2: &CommitId) -> Result<Option<MergeBase>, GitError> {
    let out = git::run_git(
        repo,
        &["merge-base", "--all", p1.as_str(), p2.as_str()],
        git::DEFAULT_TIMEOUT,
    )?;
    if !out.success() {
        if out.exit_code == 1 && out.stderr.is_empty() {
            return Ok(None);
        }
        return Err(out.check(&["merge-base", "--all"]).unwrap_err());
    }
    let candidates: Vec<CommitId> = out
        .stdout_lossy()
        .lines()
        .filter_map(|l| CommitId::parse(l.trim()))
        .collect();
    Ok(candidates.first().cloned().map(|base| MergeBase { base, candidates }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enumeration {
    pub scenarios: Vec<MergeScenario>,
    /// Merge commits examined, whatever their fate.
    pub merges_found: usize,
    pub octopus_skipped: usize,
    pub no_base_skipped: usize,
}

/// Lists up to `limit` two-parent merges reachable from the repository head,
/// newest first in reverse topological order.
pub fn enumerate_merges(repo: &LocalRepo, limit: usize) -> Result<Enumeration, MinerError> {
    let head = repo
        .head
        .as_ref()
        .filter(|_| repo.is_ready())
        .ok_or_else(|| MinerError::Precondition(format!("{} is not ready", repo.spec.name)))?;
    enumerate_merges_at(&repo.path, &repo.spec.name, head, limit)
}

pub fn enumerate_merges_at(
    path: &Path,
    repo_name: &str,
    head: &CommitId,
    limit: usize,
) -> Result<Enumeration, MinerError> {
    if limit == 0 {
        return Err(MinerError::Precondition("merge limit must be at least 1".into()));
    }
    let out = git::git_ok(
        path,
        &[
            "log",
            "--no-color",
            "--topo-order",
            "--min-parents=2",
            LOG_FORMAT,
            head.as_str(),
            "--",
        ],
    )?;
    let mut result = Enumeration::default();
    for commit in git::parse_log_records(&out)? {
        if result.scenarios.len() >= limit {
            break;
        }
        result.merges_found += 1;
        if commit.parent_ids.len() != 2 {
            result.octopus_skipped += 1;
            continue;
        }
        let (p1, p2) = (&commit.parent_ids[0], &commit.parent_ids[1]);
        let Some(base) = find_ancestor(path, p1, p2)? else {
            log::info!("{repo_name}: skipping {} (no common ancestor)", commit.id);
            result.no_base_skipped += 1;
            continue;
        };
        result.scenarios.push(MergeScenario {
            repo: repo_name.to_string(),
            merge_commit: commit.id.clone(),
            parent1: p1.clone(),
            parent2: p2.clone(),
            multi_base: base.is_multi(),
            ancestor: base.base,
            merge_timestamp: commit.author_timestamp,
        });
    }
    Ok(result)
}

/// A linked worktree reserved for replaying merges. Removed on drop.
#[derive(Debug)]
pub struct ReplayWorktree {
    repo: PathBuf,
    path: PathBuf,
    quarantined: bool,
}

impl ReplayWorktree {
    /// Adds a detached worktree of `repo` at `path`.
    pub fn create(repo: &Path, path: &Path) -> Result<ReplayWorktree, MinerError> {
        if path.exists() {
            let _ = git::run_git(
                repo,
                &["worktree", "remove", "--force", &path.to_string_lossy()],
                git::DEFAULT_TIMEOUT,
            );
            let _ = fs::remove_dir_all(path);
        }
        let _ = git::run_git(repo, &["worktree", "prune"], git::DEFAULT_TIMEOUT);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| MinerError::Precondition(e.to_string()))?;
        }
        let target = path.to_string_lossy().into_owned();
        git::git_ok(repo, &["worktree", "add", "--detach", "--force", &target, "HEAD"])?;
        Ok(ReplayWorktree {
            repo: repo.to_path_buf(),
            path: path.to_path_buf(),
            quarantined: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_quarantined(&self) -> bool {
        self.quarantined
    }

    fn status_porcelain(&self) -> Result<Vec<u8>, GitError> {
        git::git_ok(&self.path, &["status", "--porcelain", "-z", "--ignored=no"])
    }

    /// Replays `scenario` and restores the worktree to its state at entry.
    pub fn replay(&mut self, scenario: &MergeScenario) -> Result<MergeLabel, MinerError> {
        if self.quarantined {
            return Err(MinerError::Quarantined(self.path.clone()));
        }
        if !self.status_porcelain()?.is_empty() {
            return Err(MinerError::Precondition(format!(
                "worktree {} is dirty",
                self.path.display()
            )));
        }
        let entry_head = git::resolve_commit(&self.path, "HEAD")?
            .ok_or_else(|| MinerError::Precondition("worktree HEAD does not resolve".into()))?;

        let label = self.merge(scenario);
        self.restore(&entry_head)?;
        label
    }

    fn merge(&self, scenario: &MergeScenario) -> Result<MergeLabel, MinerError> {
        let checkout = git::run_git(
            &self.path,
            &["checkout", "--quiet", "--detach", scenario.parent1.as_str()],
            git::DEFAULT_TIMEOUT,
        )?;
        if !checkout.success() {
            return Ok(MergeLabel {
                outcome: Outcome::ReplayError,
                conflicting_paths: Vec::new(),
                detail: format!("checkout failed: {}", checkout.stderr_lossy().trim()),
            });
        }
        let merge = git::GitCommand::new(&self.path)
            .args(["merge", "--no-commit", "--no-ff", scenario.parent2.as_str()])
            .env("GIT_MERGE_AUTOEDIT", "no")
            .env("GIT_AUTHOR_NAME", REPLAY_IDENTITY.0)
            .env("GIT_AUTHOR_EMAIL", REPLAY_IDENTITY.1)
            .env("GIT_COMMITTER_NAME", REPLAY_IDENTITY.0)
            .env("GIT_COMMITTER_EMAIL", REPLAY_IDENTITY.1)
            .run()?;
        let unmerged = git::git_ok(
            &self.path,
            &["diff", "--name-only", "--diff-filter=U", "-z"],
        )?;
        let conflicting_paths: Vec<String> = unmerged
            .split(|&b| b == 0)
            .filter(|p| !p.is_empty())
            .map(|p| String::from_utf8_lossy(p).into_owned())
            .collect();
        let output = format!("{}{}", merge.stdout_lossy(), merge.stderr_lossy());
        let phrase = output.contains(CONFLICT_PHRASE);

        let label = match (merge.success(), !conflicting_paths.is_empty(), phrase) {
            (true, false, _) => MergeLabel {
                outcome: Outcome::Clean,
                conflicting_paths: Vec::new(),
                detail: String::new(),
            },
            (false, true, true) => MergeLabel {
                outcome: Outcome::Conflict,
                detail: format!("{} unmerged path(s)", conflicting_paths.len()),
                conflicting_paths,
            },
            (success, has_unmerged, phrase) => {
                let detail = if success || has_unmerged || phrase {
                    format!(
                        "conflict detectors disagree (exit {}, unmerged paths {}, phrase {})",
                        merge.exit_code, has_unmerged, phrase
                    )
                } else {
                    format!("merge failed (exit {}): {}", merge.exit_code, output.trim())
                };
                log::warn!("{} {}: {detail}", scenario.repo, scenario.merge_commit);
                MergeLabel {
                    outcome: Outcome::ReplayError,
                    conflicting_paths: Vec::new(),
                    detail,
                }
            }
        };
        Ok(label)
    }

    fn restore(&mut self, entry_head: &CommitId) -> Result<(), MinerError> {
        let _ = git::run_git(&self.path, &["merge", "--abort"], git::DEFAULT_TIMEOUT);
        let steps: [&[&str]; 2] = [
            &["reset", "--hard", "--quiet", entry_head.as_str()],
            &["clean", "-fdxq"],
        ];
        let mut failure = None;
        for step in steps {
            match git::run_git(&self.path, step, git::DEFAULT_TIMEOUT) {
                Ok(r) if r.success() => {}
                Ok(r) => failure = Some(r.stderr_lossy()),
                Err(e) => failure = Some(e.to_string()),
            }
        }
        if failure.is_none() {
            let clean = self.status_porcelain().map(|s| s.is_empty()).unwrap_or(false);
            let head = git::resolve_commit(&self.path, "HEAD").ok().flatten();
            if !clean {
                failure = Some("status not empty after reset".into());
            } else if head.as_ref() != Some(entry_head) {
                failure = Some("HEAD not restored".into());
            }
        }
        match failure {
            None => Ok(()),
            Some(detail) => {
                self.quarantined = true;
                Err(MinerError::Restore {
                    path: self.path.clone(),
                    detail,
                })
            }
        }
    }
}

impl Drop for ReplayWorktree {
    fn drop(&mut self) {
        let target = self.path.to_string_lossy().into_owned();
        let _ = git::run_git(
            &self.repo,
            &["worktree", "remove", "--force", &target],
            git::DEFAULT_TIMEOUT,
        );
        let _ = fs::remove_dir_all(&self.path);
        let _ = git::run_git(&self.repo, &["worktree", "prune"], git::DEFAULT_TIMEOUT);
    }
}

/// Counts reported after mining; `merges_found` is the sum of the skip
/// counters and the three outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub merges_found: usize,
    pub octopus_skipped: usize,
    pub no_base_skipped: usize,
    pub replay_errors: usize,
    pub conflicts: usize,
    pub cleans: usize,
}

impl MiningSummary {
    pub fn add(&mut self, other: &MiningSummary) {
        self.merges_found += other.merges_found;
        self.octopus_skipped += other.octopus_skipped;
        self.no_base_skipped += other.no_base_skipped;
        self.replay_errors += other.replay_errors;
        self.conflicts += other.conflicts;
        self.cleans += other.cleans;
    }

    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Conflict => self.conflicts += 1,
            Outcome::Clean => self.cleans += 1,
            Outcome::ReplayError => self.replay_errors += 1,
        }
    }
}
