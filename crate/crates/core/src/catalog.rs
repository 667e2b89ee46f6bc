//! Repository catalog: which repositories to mine and their local clones.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::git::{self, CommitId, GitError};

/// Environment variable that overrides the default working directory.
pub const WORKDIR_ENV: &str = "PREMERGE_WORKDIR";

/// Repositories of 1 GiB or more on disk are not mined.
pub const DEFAULT_SIZE_CAP: u64 = 1 << 30;

const LOCK_WAIT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSpec {
    /// `owner/name`, unique within a catalog.
    pub name: String,
    pub url: String,
    pub language: String,
    pub size_hint: Option<u64>,
    pub skip: bool,
}

impl RepoSpec {
    /// Directory name of the clone under `<workdir>/repos`.
    pub fn dir_name(&self) -> String {
        self.name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    name: Option<String>,
    url: Option<String>,
    language: Option<String>,
    skip: Option<String>,
    #[serde(default)]
    size_hint: Option<u64>,
}

/// Reads a `name,url,language,skip` CSV catalog (an optional `size_hint`
/// column is accepted).
pub fn load_catalog(file: &Path) -> Result<Vec<RepoSpec>, CatalogError> {
    let data = fs::read(file)?;
    parse_catalog(&data)
}

pub fn parse_catalog(data: &[u8]) -> Result<Vec<RepoSpec>, CatalogError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(data);
    let headers = reader.headers().map_err(|e| CatalogError::Invalid {
        line: 1,
        message: e.to_string(),
    })?;
    for required in ["name", "url", "language", "skip"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CatalogError::Invalid {
                line: 1,
                message: format!("header is missing column `{required}`"),
            });
        }
    }

    let mut seen = HashSet::new();
    let mut specs = Vec::new();
    for row in reader.deserialize::<CatalogRow>() {
        let row = row.map_err(|e| CatalogError::Invalid {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = specs.len() + 2;
        let field = |value: Option<String>, name: &str| {
            value.filter(|v| !v.is_empty()).ok_or_else(|| CatalogError::Invalid {
                line,
                message: format!("missing `{name}`"),
            })
        };
        let name = field(row.name, "name")?;
        let url = field(row.url, "url")?;
        let language = field(row.language, "language")?;
        let skip = match field(row.skip, "skip")?.as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(CatalogError::Invalid {
                    line,
                    message: format!("skip must be 0 or 1, got {other:?}"),
                })
            }
        };
        if !seen.insert(name.clone()) {
            return Err(CatalogError::Invalid {
                line,
                message: format!("duplicate repository name {name}"),
            });
        }
        specs.push(RepoSpec {
            name,
            url,
            language,
            size_hint: row.size_hint,
            skip,
        });
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepoStatus {
    Ready,
    TooLarge,
    CloneFailed,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalRepo {
    pub spec: RepoSpec,
    pub path: PathBuf,
    /// Resolved default-branch head; always set when `status` is `Ready`.
    pub head: Option<CommitId>,
    /// Unix seconds.
    pub acquired_at: u64,
    pub status: RepoStatus,
    pub detail: String,
}

impl LocalRepo {
    pub fn is_ready(&self) -> bool {
        self.status == RepoStatus::Ready
    }

    /// Wraps an existing repository (e.g. a working clone) without cloning.
    pub fn open(spec: RepoSpec, path: &Path) -> Result<LocalRepo, GitError> {
        let head = git::resolve_commit(path, "HEAD")?
            .ok_or_else(|| GitError::Environment(format!("{} has no HEAD commit", path.display())))?;
        Ok(LocalRepo {
            spec,
            path: path.to_path_buf(),
            head: Some(head),
            acquired_at: now_secs(),
            status: RepoStatus::Ready,
            detail: String::new(),
        })
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Total size in bytes of all regular files below `path`.
pub fn disk_usage(path: &Path) -> u64 {
    let Ok(meta) = fs::symlink_metadata(path) else {
        return 0;
    };
    if meta.is_file() {
        return meta.len();
    }
    if !meta.is_dir() {
        return 0;
    }
    fs::read_dir(path)
        .map(|entries| {
            entries
                .filter_map(Result::ok)
                .map(|e| disk_usage(&e.path()))
                .sum()
        })
        .unwrap_or(0)
}

struct LockFile(PathBuf);

impl LockFile {
    fn acquire(path: PathBuf) -> std::io::Result<LockFile> {
        let start = std::time::Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockFile(path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > LOCK_WAIT {
                        return Err(e);
                    }
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl Drop for LockFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Clones (or refreshes) `spec` below `workdir/repos`.
///
/// Clones are full mirrors. Per-repository failures are reported through the
/// returned status, never as an error.
pub fn acquire(spec: &RepoSpec, workdir: &Path, size_cap: u64) -> LocalRepo {
    let repos_dir = workdir.join("repos");
    let path = repos_dir.join(format!("{}.git", spec.dir_name()));
    let mut local = LocalRepo {
        spec: spec.clone(),
        path: path.clone(),
        head: None,
        acquired_at: now_secs(),
        status: RepoStatus::CloneFailed,
        detail: String::new(),
    };
    if spec.skip {
        local.status = RepoStatus::Skipped;
        local.detail = "marked skip in catalog".into();
        return local;
    }
    if let Err(e) = fs::create_dir_all(&repos_dir) {
        local.detail = format!("cannot create {}: {e}", repos_dir.display());
        return local;
    }
    let _lock = match LockFile::acquire(repos_dir.join(format!("{}.lock", spec.dir_name()))) {
        Ok(lock) => lock,
        Err(e) => {
            local.detail = format!("cannot lock {}: {e}", spec.name);
            return local;
        }
    };

    let existing = path.exists()
        && git::run_git(&path, &["rev-parse", "--git-dir"], git::DEFAULT_TIMEOUT)
            .map(|r| r.success())
            .unwrap_or(false);
    let fetched = if existing {
        git::run_git(&path, &["fetch", "--prune", "--quiet", "origin"], git::DEFAULT_TIMEOUT)
    } else {
        let _ = fs::remove_dir_all(&path);
        let target = path.to_string_lossy().into_owned();
        git::run_git(
            &repos_dir,
            &["clone", "--mirror", "--quiet", &spec.url, &target],
            Duration::from_secs(3600),
        )
    };
    match fetched {
        Ok(r) if r.success() => {}
        Ok(r) => {
            local.detail = r.stderr_lossy().trim().to_string();
            let _ = fs::remove_dir_all(&path);
            return local;
        }
        Err(e) => {
            local.detail = e.to_string();
            let _ = fs::remove_dir_all(&path);
            return local;
        }
    }

    let size = disk_usage(&path);
    if size > size_cap {
        let _ = fs::remove_dir_all(&path);
        local.status = RepoStatus::TooLarge;
        local.detail = format!("{size} bytes on disk exceeds cap of {size_cap}");
        return local;
    }
    match git::resolve_commit(&path, "HEAD") {
        Ok(Some(head)) => {
            local.head = Some(head);
            local.status = RepoStatus::Ready;
            local.detail = if existing { "fetched".into() } else { "cloned".into() };
        }
        Ok(None) => {
            let _ = fs::remove_dir_all(&path);
            local.detail = "repository has no HEAD commit".into();
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&path);
            local.detail = e.to_string();
        }
    }
    local
}

/// Acquires every spec using up to `jobs` threads; output order matches input.
pub fn acquire_all(specs: &[RepoSpec], workdir: &Path, size_cap: u64, jobs: usize) -> Vec<LocalRepo> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        use rayon::prelude::*;
        specs
            .par_iter()
            .map(|s| acquire(s, workdir, size_cap))
            .collect()
    })
}
