//! Thin wrapper around the `git` executable.
//!
//! Every git invocation in the crate goes through [`run_git`] (or
//! [`GitCommand`] when extra environment is needed). Output is captured as raw
//! bytes and only decoded when a parser needs text.
//!
//! Commit metadata is read with [`LOG_FORMAT`]:
//!
//! ```text
//! %H%x00%P%x00%ae%x00%at%x00%B%x00
//! ```
//!
//! Five NUL-terminated fields per record (hash, space separated parents, author
//! email, author unix time, raw message), and git appends one `\n` after each
//! record. Commit messages cannot contain NUL, so multi-line messages parse
//! unambiguously. Diffs are read with `-z` so paths are NUL-terminated and
//! never quoted.

use std::ffi::OsStr;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

/// `--format` argument used for every `git log` call.
pub const LOG_FORMAT: &str = "--format=%H%x00%P%x00%ae%x00%at%x00%B%x00";

/// Oldest git release the parsers and replay logic are tested against.
pub const MIN_GIT_VERSION: (u32, u32) = (2, 30);

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum GitError {
    #[error("git {args} timed out after {timeout:?}")]
    Timeout {
        args: String,
        timeout: Duration,
        partial: Box<CommandResult>,
    },
    #[error("cannot run git: {0}")]
    Environment(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("git {args} failed with exit code {exit_code}: {stderr}")]
    Failed {
        args: String,
        exit_code: i32,
        stderr: String,
    },
}

impl GitError {
    fn parse(offset: usize, message: impl Into<String>) -> Self {
        GitError::Parse {
            offset,
            message: message.into(),
        }
    }
}

/// Captured outcome of one git process.
#[derive(Debug, Clone)]
pub struct CommandResult {
    /// -1 when the process was killed by a signal.
    pub exit_code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub duration: Duration,
}

impl CommandResult {
    pub fn success(&self) -> bool {
        self.exit_code == 0
    }

    pub fn stdout_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_lossy(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }

    /// Turns a nonzero exit into [`GitError::Failed`].
    pub fn check(self, args: &[&str]) -> Result<CommandResult, GitError> {
        if self.success() {
            Ok(self)
        } else {
            Err(GitError::Failed {
                args: args.join(" "),
                exit_code: self.exit_code,
                stderr: self.stderr_lossy().trim().to_string(),
            })
        }
    }
}

/// Builder for a git invocation with optional extra environment.
#[derive(Debug, Clone)]
pub struct GitCommand<'a> {
    dir: &'a Path,
    args: Vec<String>,
    env: Vec<(String, String)>,
    timeout: Duration,
}

impl<'a> GitCommand<'a> {
    pub fn new(dir: &'a Path) -> Self {
        GitCommand {
            dir,
            args: Vec::new(),
            env: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.args
            .extend(args.into_iter().map(|a| a.as_ref().to_string()));
        self
    }

    pub fn env(mut self, key: &str, value: &str) -> Self {
        self.env.push((key.to_string(), value.to_string()));
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn run(&self) -> Result<CommandResult, GitError> {
        let mut cmd = Command::new("git");
        cmd.current_dir(self.dir)
            .args(&self.args)
            .env("LC_ALL", "C")
            .env("LANGUAGE", "C")
            .env("GIT_TERMINAL_PROMPT", "0")
            .env("GIT_PAGER", "cat")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for (k, v) in &self.env {
            cmd.env(k, v);
        }
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound && !self.dir.exists() {
                GitError::Environment(format!("directory {} does not exist", self.dir.display()))
            } else {
                GitError::Environment(format!("failed to spawn git: {e}"))
            }
        })?;

        let stdout = drain(child.stdout.take());
        let stderr = drain(child.stderr.take());
        let remaining = self.timeout.saturating_sub(start.elapsed());
        let status = child
            .wait_timeout(remaining)
            .map_err(|e| GitError::Environment(format!("waiting for git: {e}")))?;
        let timed_out = match status {
            Some(_) => start.elapsed() > self.timeout,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                true
            }
        };
        let result = CommandResult {
            exit_code: status.and_then(|s| s.code()).unwrap_or(-1),
            stdout: stdout.join().unwrap_or_default(),
            stderr: stderr.join().unwrap_or_default(),
            duration: start.elapsed(),
        };
        if timed_out {
            return Err(GitError::Timeout {
                args: self.args.join(" "),
                timeout: self.timeout,
                partial: Box::new(result),
            });
        }
        Ok(result)
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut pipe) = pipe {
            let _ = pipe.read_to_end(&mut buf);
        }
        buf
    })
}

/// Runs `git <args>` inside `repo`. Nonzero exits are returned, not raised.
pub fn run_git<S: AsRef<str>>(
    repo: &Path,
    args: &[S],
    timeout: Duration,
) -> Result<CommandResult, GitError> {
    GitCommand::new(repo).args(args).timeout(timeout).run()
}

/// Runs a command that must succeed and returns its stdout.
pub(crate) fn git_ok(repo: &Path, args: &[&str]) -> Result<Vec<u8>, GitError> {
    Ok(run_git(repo, args, DEFAULT_TIMEOUT)?.check(args)?.stdout)
}

/// Installed git version, e.g. `"2.34.1"`.
pub fn git_version() -> Result<String, GitError> {
    let out = run_git(Path::new("."), &["--version"], Duration::from_secs(30))?;
    let text = out.stdout_lossy();
    text.trim()
        .strip_prefix("git version ")
        .map(|v| v.to_string())
        .ok_or_else(|| GitError::Environment(format!("unexpected `git --version` output: {text}")))
}

/// Fails with [`GitError::Environment`] when git is missing or too old.
pub fn ensure_git() -> Result<String, GitError> {
    let version = git_version()?;
    let mut parts = version.split('.').map(|p| p.parse::<u32>().unwrap_or(0));
    let found = (parts.next().unwrap_or(0), parts.next().unwrap_or(0));
    if found < MIN_GIT_VERSION {
        return Err(GitError::Environment(format!(
            "git {version} is older than the required {}.{}",
            MIN_GIT_VERSION.0, MIN_GIT_VERSION.1
        )));
    }
    log::info!("using git {version}");
    Ok(version)
}

/// A 40 character lowercase hex object name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitId(String);

impl CommitId {
    pub fn parse(s: &str) -> Option<CommitId> {
        let valid = s.len() == 40
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        valid.then(|| CommitId(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CommitId {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CommitId::parse(&value).ok_or_else(|| format!("not a commit hash: {value:?}"))
    }
}

impl From<CommitId> for String {
    fn from(id: CommitId) -> String {
        id.0
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for CommitId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl AsRef<OsStr> for CommitId {
    fn as_ref(&self) -> &OsStr {
        OsStr::new(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitMeta {
    pub id: CommitId,
    pub parent_ids: Vec<CommitId>,
    pub author_email: String,
    pub author_timestamp: i64,
    pub message: String,
}

/// Parses output of `git log` run with [`LOG_FORMAT`].
pub fn parse_log_records(output: &[u8]) -> Result<Vec<CommitMeta>, GitError> {
    let mut records = Vec::new();
    let mut pos = 0;
    while pos < output.len() {
        if output[pos] == b'\n' {
            pos += 1;
            continue;
        }
        let start = pos;
        let mut fields: [&[u8]; 5] = [&[]; 5];
        for (i, field) in fields.iter_mut().enumerate() {
            let end = output[pos..]
                .iter()
                .position(|&b| b == 0)
                .map(|n| pos + n)
                .ok_or_else(|| {
                    GitError::parse(pos, format!("record truncated, missing field {}", i + 1))
                })?;
            *field = &output[pos..end];
            pos = end + 1;
        }
        let text = |b: &[u8]| String::from_utf8_lossy(b).into_owned();
        let id = CommitId::parse(&text(fields[0]))
            .ok_or_else(|| GitError::parse(start, "invalid commit hash"))?;
        let parent_ids = text(fields[1])
            .split_ascii_whitespace()
            .map(|p| CommitId::parse(p).ok_or_else(|| GitError::parse(start, "invalid parent hash")))
            .collect::<Result<Vec<_>, _>>()?;
        let author_timestamp = text(fields[3])
            .trim()
            .parse::<i64>()
            .map_err(|_| GitError::parse(start, "invalid author timestamp"))?;
        records.push(CommitMeta {
            id,
            parent_ids,
            author_email: text(fields[2]),
            author_timestamp,
            message: text(fields[4]).trim_end().to_string(),
        });
    }
    Ok(records)
}

/// Commits reachable from `tip` but not from `exclude` (all commits when
/// `exclude` is `None`), in git's default order.
pub fn log_range(
    repo: &Path,
    exclude: Option<&CommitId>,
    tip: &CommitId,
) -> Result<Vec<CommitMeta>, GitError> {
    let range = match exclude {
        Some(base) => format!("{base}..{tip}"),
        None => tip.to_string(),
    };
    let out = git_ok(repo, &["log", "--no-color", LOG_FORMAT, &range, "--"])?;
    parse_log_records(&out)
}

/// Resolves a revision to a commit id.
pub fn resolve_commit(repo: &Path, rev: &str) -> Result<Option<CommitId>, GitError> {
    let spec = format!("{rev}^{{commit}}");
    let out = run_git(
        repo,
        &["rev-parse", "--verify", "--quiet", &spec],
        DEFAULT_TIMEOUT,
    )?;
    if !out.success() {
        return Ok(None);
    }
    Ok(CommitId::parse(out.stdout_lossy().trim()))
}

pub fn commit_meta(repo: &Path, id: &CommitId) -> Result<CommitMeta, GitError> {
    let out = git_ok(
        repo,
        &["log", "-1", "--no-color", LOG_FORMAT, id.as_str(), "--"],
    )?;
    parse_log_records(&out)?
        .into_iter()
        .next()
        .ok_or_else(|| GitError::parse(0, format!("no commit record for {id}")))
}

/// A repository-relative path kept as raw bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RepoPath(Vec<u8>);

impl RepoPath {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        RepoPath(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_string_lossy(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }
}

impl From<&str> for RepoPath {
    fn from(s: &str) -> Self {
        RepoPath(s.as_bytes().to_vec())
    }
}

impl fmt::Display for RepoPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    Added,
    Deleted,
    Modified,
    Renamed,
    Copied,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileChange {
    pub kind: ChangeKind,
    /// New path for renames and copies.
    pub path: RepoPath,
    /// Source path for renames and copies.
    pub old_path: Option<RepoPath>,
    /// `None` for binary files.
    pub lines_added: Option<u64>,
    pub lines_deleted: Option<u64>,
}

struct StatusEntry {
    kind: ChangeKind,
    path: RepoPath,
    old_path: Option<RepoPath>,
}

struct NumstatEntry {
    added: Option<u64>,
    deleted: Option<u64>,
    path: RepoPath,
    offset: usize,
}

fn status_kind(letter: u8, offset: usize) -> Result<(ChangeKind, bool), GitError> {
    Ok(match letter {
        b'A' => (ChangeKind::Added, false),
        b'D' => (ChangeKind::Deleted, false),
        // type changes (file <-> symlink) are content modifications
        b'M' | b'T' => (ChangeKind::Modified, false),
        b'R' => (ChangeKind::Renamed, true),
        b'C' => (ChangeKind::Copied, true),
        other => {
            return Err(GitError::parse(
                offset,
                format!("unsupported status letter {:?}", other as char),
            ))
        }
    })
}

fn parse_count(field: &[u8], offset: usize) -> Result<Option<u64>, GitError> {
    if field == b"-" {
        return Ok(None);
    }
    std::str::from_utf8(field)
        .ok()
        .and_then(|s| s.parse().ok())
        .map(Some)
        .ok_or_else(|| GitError::parse(offset, "invalid numstat count"))
}

/// Splits a NUL-delimited stream into (offset, token) pairs.
fn nul_tokens(data: &[u8]) -> Vec<(usize, &[u8])> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    for piece in data.split(|&b| b == 0) {
        tokens.push((pos, piece));
        pos += piece.len() + 1;
    }
    if data.last() == Some(&0) || data.is_empty() {
        tokens.pop();
    }
    tokens
}

fn parse_name_status_z(data: &[u8]) -> Result<Vec<StatusEntry>, GitError> {
    let tokens = nul_tokens(data);
    let mut it = tokens.into_iter();
    let mut entries = Vec::new();
    while let Some((offset, status)) = it.next() {
        let status = status.strip_prefix(b"\n").unwrap_or(status);
        let letter = *status
            .first()
            .ok_or_else(|| GitError::parse(offset, "empty status field"))?;
        let (kind, two_paths) = status_kind(letter, offset)?;
        let mut next_path = || {
            it.next()
                .map(|(_, p)| RepoPath::new(p))
                .ok_or_else(|| GitError::parse(offset, "status entry missing path"))
        };
        let (old_path, path) = if two_paths {
            let old = next_path()?;
            (Some(old), next_path()?)
        } else {
            (None, next_path()?)
        };
        entries.push(StatusEntry {
            kind,
            path,
            old_path,
        });
    }
    Ok(entries)
}

fn parse_numstat_z(data: &[u8]) -> Result<Vec<NumstatEntry>, GitError> {
    let tokens = nul_tokens(data);
    let mut it = tokens.into_iter();
    let mut entries = Vec::new();
    while let Some((offset, head)) = it.next() {
        let head = head.strip_prefix(b"\n").unwrap_or(head);
        let mut cols = head.splitn(3, |&b| b == b'\t');
        let added = parse_count(cols.next().unwrap_or_default(), offset)?;
        let deleted = parse_count(
            cols.next()
                .ok_or_else(|| GitError::parse(offset, "numstat entry missing deletions"))?,
            offset,
        )?;
        let path_field = cols
            .next()
            .ok_or_else(|| GitError::parse(offset, "numstat entry missing path"))?;
        let path = if path_field.is_empty() {
            // rename/copy: "<a>\t<d>\t\0<old>\0<new>\0"
            it.next()
                .ok_or_else(|| GitError::parse(offset, "numstat rename missing source"))?;
            let (_, new) = it
                .next()
                .ok_or_else(|| GitError::parse(offset, "numstat rename missing target"))?;
            RepoPath::new(new)
        } else {
            RepoPath::new(path_field)
        };
        entries.push(NumstatEntry {
            added,
            deleted,
            path,
            offset,
        });
    }
    Ok(entries)
}

/// Line-oriented fallback (output produced without `-z`).
fn parse_name_status_lines(data: &[u8]) -> Result<Vec<StatusEntry>, GitError> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for line in data.split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += line.len() + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&[u8]> = line.split(|&b| b == b'\t').collect();
        let letter = cols[0][0];
        let (kind, two_paths) = status_kind(letter, line_offset)?;
        let expected = if two_paths { 3 } else { 2 };
        if cols.len() != expected {
            return Err(GitError::parse(line_offset, "malformed name-status line"));
        }
        entries.push(StatusEntry {
            kind,
            path: RepoPath::new(cols[expected - 1]),
            old_path: two_paths.then(|| RepoPath::new(cols[1])),
        });
    }
    Ok(entries)
}

/// Expands numstat's `dir/{old => new}/f` and `old => new` rename notation to the new path.
fn numstat_new_path(field: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(field);
    if !text.contains(" => ") {
        return field.to_vec();
    }
    if let (Some(open), Some(close)) = (text.find('{'), text.rfind('}')) {
        let inner = &text[open + 1..close];
        let new = inner.split(" => ").nth(1).unwrap_or("");
        let joined = format!("{}{}{}", &text[..open], new, &text[close + 1..]);
        return joined.replace("//", "/").into_bytes();
    }
    text.split(" => ").nth(1).unwrap_or("").as_bytes().to_vec()
}

fn parse_numstat_lines(data: &[u8]) -> Result<Vec<NumstatEntry>, GitError> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for line in data.split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += line.len() + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&[u8]> = line.splitn(3, |&b| b == b'\t').collect();
        if cols.len() != 3 {
            return Err(GitError::parse(line_offset, "malformed numstat line"));
        }
        entries.push(NumstatEntry {
            added: parse_count(cols[0], line_offset)?,
            deleted: parse_count(cols[1], line_offset)?,
            path: RepoPath::new(numstat_new_path(cols[2])),
            offset: line_offset,
        });
    }
    Ok(entries)
}

/// Joins `--numstat` and `--name-status` output of the same diff.
///
/// Both `-z` and line-oriented output are accepted; the two inputs must use
/// the same mode. Every path must appear in both.
pub fn parse_changes(numstat: &[u8], name_status: &[u8]) -> Result<Vec<FileChange>, GitError> {
    let zero_mode = numstat.contains(&0) || name_status.contains(&0);
    let (stats, statuses) = if zero_mode {
        (parse_numstat_z(numstat)?, parse_name_status_z(name_status)?)
    } else {
        (
            parse_numstat_lines(numstat)?,
            parse_name_status_lines(name_status)?,
        )
    };
    if stats.len() != statuses.len() {
        let offset = stats.get(statuses.len()).map(|s| s.offset).unwrap_or(0);
        return Err(GitError::parse(
            offset,
            format!(
                "numstat lists {} paths but name-status lists {}",
                stats.len(),
                statuses.len()
            ),
        ));
    }
    let mut by_path: std::collections::HashMap<&RepoPath, &NumstatEntry> =
        std::collections::HashMap::with_capacity(stats.len());
    for s in &stats {
        if by_path.insert(&s.path, s).is_some() {
            return Err(GitError::parse(
                s.offset,
                format!("path {} listed twice in numstat", s.path),
            ));
        }
    }
    statuses
        .into_iter()
        .map(|st| {
            let stat = by_path.get(&st.path).ok_or_else(|| {
                GitError::parse(0, format!("path {} missing from numstat output", st.path))
            })?;
            Ok(FileChange {
                kind: st.kind,
                path: st.path,
                old_path: st.old_path,
                lines_added: stat.added,
                lines_deleted: stat.deleted,
            })
        })
        .collect()
}

/// Endpoint diff `from -> to` with rename and copy detection.
pub fn diff_changes(repo: &Path, from: &CommitId, to: &CommitId) -> Result<Vec<FileChange>, GitError> {
    let base = ["diff", "--no-color", "--no-ext-diff", "-z", "-M", "-C"];
    let numstat = git_ok(
        repo,
        &[&base[..], &["--numstat", from.as_str(), to.as_str(), "--"]].concat(),
    )?;
    let name_status = git_ok(
        repo,
        &[&base[..], &["--name-status", from.as_str(), to.as_str(), "--"]].concat(),
    )?;
    parse_changes(&numstat, &name_status)
}

#[cfg(test)]
mod tests {
    use super::*;

    const H1: &str = "1111111111111111111111111111111111111111";
    const H2: &str = "2222222222222222222222222222222222222222";
    const H3: &str = "3333333333333333333333333333333333333333";

    #[test]
    fn empty_log_is_empty() {
        assert!(parse_log_records(b"").unwrap().is_empty());
    }

    #[test]
    fn merge_record_has_two_parents() {
        let out = format!("{H1}\0{H2} {H3}\0Dev@Example.org\01700000000\0Merge branch 'x'\n\nbody line\n\0\n");
        let recs = parse_log_records(out.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].parent_ids.len(), 2);
        assert_eq!(recs[0].author_timestamp, 1_700_000_000);
        assert_eq!(recs[0].message, "Merge branch 'x'\n\nbody line");
        assert_eq!(recs[0].author_email, "Dev@Example.org");
    }

    #[test]
    fn root_commit_has_no_parents() {
        let out = format!("{H1}\0\0a@b\01\0init\n\0\n{H2}\0{H1}\0a@b\02\0second\n\0\n");
        let recs = parse_log_records(out.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].parent_ids.is_empty());
        assert_eq!(recs[1].parent_ids[0].as_str(), H1);
    }

    #[test]
    fn truncated_record_reports_offset() {
        let out = format!("{H1}\0\0a@b\01\0init\n\0\n{H2}\0{H1}\0");
        match parse_log_records(out.as_bytes()) {
            Err(GitError::Parse { offset, .. }) => assert!(offset > 40),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_hash_is_rejected() {
        let out = "xyz\0\0a@b\x001\0m\0\n";
        assert!(matches!(
            parse_log_records(out.as_bytes()),
            Err(GitError::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn single_line_changes() {
        let c = parse_changes(b"3\t1\tsrc/a.c", b"M\tsrc/a.c").unwrap();
        assert_eq!(
            c,
            vec![FileChange {
                kind: ChangeKind::Modified,
                path: "src/a.c".into(),
                old_path: None,
                lines_added: Some(3),
                lines_deleted: Some(1),
            }]
        );
    }

    #[test]
    fn binary_numstat_is_unknown() {
        let c = parse_changes(b"-\t-\timg.png", b"A\timg.png").unwrap();
        assert_eq!(c[0].kind, ChangeKind::Added);
        assert_eq!(c[0].lines_added, None);
        assert_eq!(c[0].lines_deleted, None);
    }

    #[test]
    fn zero_delimited_rename() {
        // a tab inside a path is legal with -z
        let numstat = b"0\t0\t\0oldname.txt\0new\tname.txt\x002\t0\tb\0";
        let status = b"R097\0oldname.txt\0new\tname.txt\0A\0b\0";
        let c = parse_changes(numstat, status).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].kind, ChangeKind::Renamed);
        assert_eq!(c[0].path, RepoPath::from("new\tname.txt"));
        assert_eq!(c[0].old_path, Some(RepoPath::from("oldname.txt")));
        assert_eq!(c[1].lines_added, Some(2));
    }

    #[test]
    fn brace_rename_in_line_mode() {
        let c = parse_changes(b"1\t1\tsrc/{a => b}/x.rs", b"R090\tsrc/a/x.rs\tsrc/b/x.rs").unwrap();
        assert_eq!(c[0].path, RepoPath::from("src/b/x.rs"));
        assert_eq!(c[0].lines_added, Some(1));
    }

    #[test]
    fn inconsistent_outputs_rejected() {
        assert!(matches!(
            parse_changes(b"1\t0\ta", b"M\tb"),
            Err(GitError::Parse { .. })
        ));
        assert!(matches!(
            parse_changes(b"1\t0\ta\n1\t0\tb", b"M\ta"),
            Err(GitError::Parse { .. })
        ));
    }

    #[test]
    fn non_utf8_paths_keep_bytes() {
        let c = parse_changes(b"1\t0\tcaf\xe9\0", b"M\0caf\xe9\0").unwrap();
        assert_eq!(c[0].path.as_bytes(), b"caf\xe9");
        assert_eq!(c[0].path.to_string_lossy(), "caf\u{fffd}");
    }

    #[test]
    fn commit_id_validation() {
        assert!(CommitId::parse(H1).is_some());
        assert!(CommitId::parse(&H1.to_uppercase().replace('1', "A")).is_none());
        assert!(CommitId::parse("abc").is_none());
    }
}
