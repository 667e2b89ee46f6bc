//! Scripted git repositories for tests: a small repository with known merge
//! outcomes and feature values, and a generator for larger synthetic
//! histories with naturally occurring conflicts.

pub mod oracles;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Author timestamp of the first fixture commit (unix seconds).
pub const T0: i64 = 1_600_000_000;
pub const HOUR: i64 = 3600;

/// A repository driven through the git CLI with fixed identities and dates.
#[derive(Debug, Clone)]
pub struct FixtureRepo {
    path: PathBuf,
}

fn check(out: Output, what: &str) -> io::Result<Output> {
    if out.status.success() {
        Ok(out)
    } else {
        Err(io::Error::other(
            format!(
                "git {what} failed: {}{}",
                String::from_utf8_lossy(&out.stdout),
                String::from_utf8_lossy(&out.stderr)
            ),
        ))
    }
}

impl FixtureRepo {
    /// Creates an empty repository on branch `main`.
    pub fn init(path: &Path) -> io::Result<FixtureRepo> {
        fs::create_dir_all(path)?;
        let repo = FixtureRepo { path: path.to_path_buf() };
        repo.git(&["init", "--quiet", "--initial-branch=main"])?;
        for (k, v) in [
            ("user.name", "Fixture"),
            ("user.email", "fixture@example.com"),
            ("commit.gpgsign", "false"),
            ("merge.renames", "true"),
            ("core.autocrlf", "false"),
        ] {
            repo.git(&["config", k, v])?;
        }
        Ok(repo)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn command(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new("git");
        cmd.current_dir(&self.path)
            .args(args)
            .env("LC_ALL", "C")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_MERGE_AUTOEDIT", "no");
        cmd
    }

    pub fn git(&self, args: &[&str]) -> io::Result<Output> {
        check(self.command(args).output()?, &args.join(" "))
    }

    fn git_as(&self, args: &[&str], email: &str, time: i64) -> io::Result<Output> {
        let date = format!("@{time} +0000");
        let name = email.split('@').next().unwrap_or(email);
        let out = self
            .command(args)
            .env("GIT_AUTHOR_NAME", name)
            .env("GIT_AUTHOR_EMAIL", email)
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_NAME", name)
            .env("GIT_COMMITTER_EMAIL", email)
            .env("GIT_COMMITTER_DATE", &date)
            .output()?;
        check(out, &args.join(" "))
    }

    pub fn write(&self, file: &str, content: &str) -> io::Result<()> {
        let p = self.path.join(file);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(p, content)
    }

    pub fn read(&self, file: &str) -> io::Result<String> {
        fs::read_to_string(self.path.join(file))
    }

    pub fn remove(&self, file: &str) -> io::Result<()> {
        self.git(&["rm", "--quiet", file]).map(|_| ())
    }

    pub fn rename(&self, from: &str, to: &str) -> io::Result<()> {
        self.git(&["mv", from, to]).map(|_| ())
    }

    pub fn head(&self) -> io::Result<String> {
        self.rev_parse("HEAD")
    }

    pub fn rev_parse(&self, rev: &str) -> io::Result<String> {
        let out = self.git(&["rev-parse", "--verify", &format!("{rev}^{{commit}}")])?;
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    /// Stages everything and commits; returns the new commit id.
    pub fn commit(&self, message: &str, email: &str, time: i64) -> io::Result<String> {
        self.git(&["add", "--all"])?;
        self.git_as(&["commit", "--quiet", "--allow-empty", "-m", message], email, time)?;
        self.head()
    }

    pub fn branch(&self, name: &str, start: &str) -> io::Result<()> {
        self.git(&["branch", name, start]).map(|_| ())
    }

    pub fn checkout(&self, name: &str) -> io::Result<()> {
        self.git(&["checkout", "--quiet", name]).map(|_| ())
    }

    /// Merges `branches` into the current branch with `--no-ff`.
    /// On conflict every unmerged file is resolved to the current branch's
    /// version and the merge is committed. Returns (merge id, conflicted).
    pub fn merge(&self, branches: &[&str], message: &str, email: &str, time: i64) -> io::Result<(String, bool)> {
        let mut args = vec!["merge", "--quiet", "--no-ff", "-m", message];
        args.extend_from_slice(branches);
        let date = format!("@{time} +0000");
        let name = email.split('@').next().unwrap_or(email);
        let out = self
            .command(&args)
            .env("GIT_AUTHOR_NAME", name)
            .env("GIT_AUTHOR_EMAIL", email)
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_NAME", name)
            .env("GIT_COMMITTER_EMAIL", email)
            .env("GIT_COMMITTER_DATE", &date)
            .output()?;
        if out.status.success() {
            return Ok((self.head()?, false));
        }
        let unmerged = self.git(&["diff", "--name-only", "--diff-filter=U", "-z"])?;
        let files: Vec<String> = unmerged
            .stdout
            .split(|&b| b == 0)
            .filter(|p| !p.is_empty())
            .map(|p| String::from_utf8_lossy(p).into_owned())
            .collect();
        if files.is_empty() {
            return Err(io::Error::other(
                format!("merge failed without conflicts: {}", String::from_utf8_lossy(&out.stderr)),
            ));
        }
        for f in &files {
            self.git(&["checkout", "--ours", "--", f])?;
            self.git(&["add", "--", f])?;
        }
        self.git_as(&["commit", "--quiet", "--no-edit"], email, time)?;
        Ok((self.head()?, true))
    }
}

/// A merge of the mining fixture with its known label and feature vector
/// (norm-1 combination, simultaneously-changed-files first).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedScenario {
    pub name: &'static str,
    pub merge: String,
    pub parent1: String,
    pub parent2: String,
    pub ancestor: String,
    pub conflict: bool,
    pub features: [f64; 28],
}

#[derive(Debug, Clone)]
pub struct MiningFixture {
    pub repo: FixtureRepo,
    /// Two-parent merges, oldest first.
    pub scenarios: Vec<ExpectedScenario>,
    pub octopus: String,
}

const ALICE: &str = "alice@example.com";
const BOB: &str = "bob@example.com";
const CAROL: &str = "carol@example.com";
const DAVE: &str = "dave@example.com";
const ERIN: &str = "erin@example.com";

/// Feature vector layout helper: FS1, then the 27 norm-1 branch sums.
#[allow(clippy::too_many_arguments)]
fn vector(
    fs1: f64,
    commits: f64,
    last_week: f64,
    files: [f64; 5],
    lines: (f64, f64),
    devs: f64,
    keywords: &[(&str, f64)],
    msg: [f64; 4],
    duration: f64,
) -> [f64; 28] {
    const KW: [&str; 12] = [
        "fix", "bug", "feature", "improve", "document", "refactor", "update", "add", "remove", "use", "delete",
        "change",
    ];
    let mut v = [0.0; 28];
    v[0] = fs1;
    v[1] = commits;
    v[2] = last_week;
    v[3..8].copy_from_slice(&files);
    v[8] = lines.0;
    v[9] = lines.1;
    v[10] = devs;
    for (kw, n) in keywords {
        let slot = KW.iter().position(|k| k == kw).expect("known keyword");
        v[11 + slot] = *n;
    }
    v[23..27].copy_from_slice(&msg);
    v[27] = duration;
    v
}

/// Builds the mining fixture at `path`: five two-parent merges (three
/// clean, two conflicting), one octopus merge and one pure rename.
///
/// Expected vectors are worked out by hand per branch and summed:
/// files are [added, deleted, renamed, modified, copied], lines are
/// (added, deleted) of the endpoint diff, message statistics are
/// (min, max, mean, median) of character counts.
pub fn mining_fixture(path: &Path) -> io::Result<MiningFixture> {
    let r = FixtureRepo::init(path)?;
    r.write("a.txt", "alpha\nbeta\ngamma\n")?;
    r.write("b.txt", "one\ntwo\nthree\n")?;
    r.write("c.txt", "red\ngreen\nblue\n")?;
    r.write("old.md", "# Notes\nsome text here\nmore text\nend\n")?;
    let c0 = r.commit("Initial import", ALICE, T0)?;
    let mut scenarios = Vec::new();

    // clean: disjoint files
    r.branch("feat1", "main")?;
    r.checkout("feat1")?;
    r.write("f.txt", "x\ny\nz\n")?;
    let f1 = r.commit("Add feature file", BOB, T0 + HOUR)?;
    r.checkout("main")?;
    r.write("a.txt", "alpha!\nbeta\ngamma\n")?;
    let a1 = r.commit("Fix typo in a", ALICE, T0 + 2 * HOUR)?;
    let (m1, c) = r.merge(&["feat1"], "Merge feat1", ALICE, T0 + 3 * HOUR)?;
    assert!(!c);
    // p1: 1 commit, a.txt M +1-1, "Fix typo in a" (13), 2h
    // p2: 1 commit, f.txt A +3, "Add feature file" (16), 1h
    scenarios.push(ExpectedScenario {
        name: "disjoint files",
        merge: m1.clone(),
        parent1: a1,
        parent2: f1,
        ancestor: c0,
        conflict: false,
        features: vector(
            0.0,
            2.0,
            2.0,
            [1.0, 0.0, 0.0, 1.0, 0.0],
            (4.0, 1.0),
            2.0,
            &[("fix", 1.0), ("feature", 1.0), ("add", 1.0)],
            [29.0, 29.0, 29.0, 29.0],
            3.0,
        ),
    });

    // conflict: same line of b.txt
    r.branch("feat2", "main")?;
    r.checkout("feat2")?;
    r.write("b.txt", "uno\ntwo\nthree\n")?;
    r.commit("Change b header", CAROL, T0 + 4 * HOUR)?;
    r.write("c.txt", "crimson\ngreen\nblue\n")?;
    let f2 = r.commit("Refactor c colors", DAVE, T0 + 6 * HOUR)?;
    r.checkout("main")?;
    r.write("b.txt", "ONE\ntwo\nthree\n")?;
    let a2 = r.commit("Update b header", ALICE, T0 + 5 * HOUR)?;
    let (m2, c) = r.merge(&["feat2"], "Merge feat2", ALICE, T0 + 7 * HOUR)?;
    assert!(c);
    // p1: 1 commit, b.txt M +1-1, "Update b header" (15), 5h-3h
    // p2: 2 commits by 2 devs, b.txt+c.txt M +2-2, lengths 15 and 17, 6h-3h
    // shared: b.txt
    scenarios.push(ExpectedScenario {
        name: "same line edited",
        merge: m2.clone(),
        parent1: a2,
        parent2: f2,
        ancestor: m1,
        conflict: true,
        features: vector(
            1.0,
            3.0,
            3.0,
            [0.0, 0.0, 0.0, 3.0, 0.0],
            (3.0, 3.0),
            3.0,
            &[("update", 1.0), ("refactor", 1.0), ("change", 1.0)],
            [30.0, 32.0, 31.0, 31.0],
            5.0,
        ),
    });

    // clean: rename on one side
    r.branch("feat3", "main")?;
    r.checkout("feat3")?;
    r.rename("old.md", "new.md")?;
    let f3 = r.commit("Rename notes to docs", BOB, T0 + 8 * HOUR)?;
    r.checkout("main")?;
    r.write("a.txt", "alpha!\nbeta\ngamma ray\n")?;
    let a3 = r.commit("Improve a wording", ALICE, T0 + 10 * HOUR)?;
    let (m3, c) = r.merge(&["feat3"], "Merge feat3", ALICE, T0 + 11 * HOUR)?;
    assert!(!c);
    // p1: 1 commit, a.txt M +1-1, "Improve a wording" (17), 10h-7h
    // p2: 1 commit, pure rename R +0-0, "Rename notes to docs" (20, no keyword), 8h-7h
    scenarios.push(ExpectedScenario {
        name: "rename",
        merge: m3.clone(),
        parent1: a3,
        parent2: f3,
        ancestor: m2,
        conflict: false,
        features: vector(
            0.0,
            2.0,
            2.0,
            [0.0, 0.0, 1.0, 1.0, 0.0],
            (1.0, 1.0),
            2.0,
            &[("improve", 1.0)],
            [37.0, 37.0, 37.0, 37.0],
            4.0,
        ),
    });

    // conflict: line deleted on one side, edited on the other
    r.branch("feat4", "main")?;
    r.checkout("feat4")?;
    r.write("a.txt", "alpha!\nbeta\ngamma rays\n")?;
    r.remove("f.txt")?;
    let f4 = r.commit("fix bug in gamma", BOB, T0 + 12 * HOUR)?;
    r.checkout("main")?;
    r.write("a.txt", "alpha!\nbeta\n")?;
    let a4 = r.commit("Remove gamma line bug", ERIN, T0 + 13 * HOUR)?;
    let (m4, c) = r.merge(&["feat4"], "Merge feat4", ALICE, T0 + 14 * HOUR)?;
    assert!(c);
    // p1: 1 commit, a.txt M +0-1, "Remove gamma line bug" (21), 13h-11h
    // p2: 1 commit, a.txt M +1-1 and f.txt D -3, "fix bug in gamma" (16), 12h-11h
    // shared: a.txt
    scenarios.push(ExpectedScenario {
        name: "edit against delete",
        merge: m4.clone(),
        parent1: a4,
        parent2: f4,
        ancestor: m3,
        conflict: true,
        features: vector(
            1.0,
            2.0,
            2.0,
            [0.0, 1.0, 0.0, 2.0, 0.0],
            (1.0, 5.0),
            2.0,
            &[("fix", 1.0), ("bug", 2.0), ("remove", 1.0)],
            [37.0, 37.0, 37.0, 37.0],
            3.0,
        ),
    });

    // clean: long-lived branch, first commit older than a week before its tip
    r.branch("feat5", "main")?;
    r.checkout("feat5")?;
    r.write("docs.md", "intro\nbody\n")?;
    r.commit("Add docs", BOB, T0 + 15 * HOUR)?;
    r.write("docs.md", "Intro\nbody\n")?;
    let f5 = r.commit("Use new docs layout", BOB, T0 + 207 * HOUR)?;
    r.checkout("main")?;
    r.write("b.txt", "ONE\ntwo!\nthree\n")?;
    let a5 = r.commit("Update b", ALICE, T0 + 16 * HOUR)?;
    let (m5, c) = r.merge(&["feat5"], "Merge feat5", ALICE, T0 + 208 * HOUR)?;
    assert!(!c);
    // p1: 1 commit, b.txt M +1-1, "Update b" (8), 16h-14h
    // p2: 2 commits 192h apart so only the tip falls in the last week,
    //     docs.md A +2, lengths 8 and 19, 207h-14h
    scenarios.push(ExpectedScenario {
        name: "long-lived branch",
        merge: m5,
        parent1: a5,
        parent2: f5,
        ancestor: m4,
        conflict: false,
        features: vector(
            0.0,
            3.0,
            2.0,
            [1.0, 0.0, 0.0, 1.0, 0.0],
            (3.0, 1.0),
            2.0,
            &[("update", 1.0), ("add", 1.0), ("use", 1.0)],
            [16.0, 27.0, 21.5, 21.5],
            195.0,
        ),
    });

    for (i, file) in ["o1.txt", "o2.txt"].iter().enumerate() {
        let name = format!("oct{}", i + 1);
        r.branch(&name, "main")?;
        r.checkout(&name)?;
        r.write(file, "octopus\n")?;
        r.commit(&format!("Add {file}"), DAVE, T0 + (209 + i as i64) * HOUR)?;
        r.checkout("main")?;
    }
    let (octopus, _) = r.merge(&["oct1", "oct2"], "Octopus merge", ALICE, T0 + 212 * HOUR)?;

    Ok(MiningFixture {
        repo: r,
        scenarios,
        octopus,
    })
}

/// One generated repository of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRepo {
    pub name: String,
    pub language: String,
    pub path: PathBuf,
    pub merges: usize,
    pub conflicts: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusConfig {
    pub repos: usize,
    pub merges_per_repo: usize,
    pub files: usize,
    pub lines_per_file: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            repos: 3,
            merges_per_repo: 80,
            files: 14,
            lines_per_file: 40,
            seed: 7,
        }
    }
}

const DEVELOPERS: [&str; 7] = [
    "ana@corp.example",
    "ben@corp.example",
    "chen@corp.example",
    "dia@corp.example",
    "eli@corp.example",
    "fay@corp.example",
    "gus@corp.example",
];

const VERBS: [&str; 12] = [
    "Fix", "Add", "Update", "Refactor", "Improve", "Remove", "Change", "Use", "Document", "Tidy", "Rework", "Delete",
];
const NOUNS: [&str; 10] = [
    "parser", "config loader", "cache layer", "bug in retry logic", "feature flag", "logging", "tests", "docs",
    "error handling", "build script",
];

struct Simulator<'a> {
    repo: &'a FixtureRepo,
    rng: ChaCha8Rng,
    files: Vec<String>,
    clock: i64,
    token: u64,
    cfg: CorpusConfig,
}

impl Simulator<'_> {
    fn tick(&mut self, max_minutes: i64) -> i64 {
        self.clock += self.rng.gen_range(5..=max_minutes) * 60;
        self.clock
    }

    fn message(&mut self) -> String {
        let verb = VERBS.choose(&mut self.rng).unwrap();
        let noun = NOUNS.choose(&mut self.rng).unwrap();
        if self.rng.gen_bool(0.3) {
            format!("{verb} {noun}\n\nFollow-up for item {}", self.rng.gen_range(1..500))
        } else {
            format!("{verb} {noun}")
        }
    }

    fn fresh(&mut self) -> String {
        self.token += 1;
        format!("line {} v{}", self.rng.gen_range(0..1000), self.token)
    }

    /// Rewrites a run of lines in one file; hot files are picked more often.
    fn edit(&mut self, span_max: usize) -> io::Result<()> {
        let hot = self.files.len().min(4);
        let idx = if self.rng.gen_bool(0.5) {
            self.rng.gen_range(0..hot)
        } else {
            self.rng.gen_range(0..self.files.len())
        };
        let file = self.files[idx].clone();
        let mut lines: Vec<String> = self.repo.read(&file)?.lines().map(str::to_string).collect();
        let span = self.rng.gen_range(1..=span_max).min(lines.len());
        let start = self.rng.gen_range(0..=lines.len() - span);
        for line in &mut lines[start..start + span] {
            *line = self.fresh();
        }
        if self.rng.gen_bool(0.2) {
            let at = self.rng.gen_range(0..=lines.len());
            let extra = self.fresh();
            lines.insert(at, extra);
        }
        self.repo.write(&file, &(lines.join("\n") + "\n"))
    }

    fn add_file(&mut self) -> io::Result<()> {
        self.token += 1;
        let name = format!("src/gen_{}.txt", self.token);
        let n = self.rng.gen_range(3..20);
        let body: Vec<String> = (0..n).map(|_| self.fresh()).collect();
        self.repo.write(&name, &(body.join("\n") + "\n"))
    }

    fn work(&mut self, commits: usize, span_max: usize, dev: &str) -> io::Result<()> {
        for _ in 0..commits {
            let edits = self.rng.gen_range(1..=3);
            for _ in 0..edits {
                self.edit(span_max)?;
            }
            if self.rng.gen_bool(0.15) {
                self.add_file()?;
            }
            let author = if self.rng.gen_bool(0.8) {
                dev.to_string()
            } else {
                DEVELOPERS.choose(&mut self.rng).unwrap().to_string()
            };
            let msg = self.message();
            let t = self.tick(600);
            self.repo.commit(&msg, &author, t)?;
        }
        Ok(())
    }

    fn run(&mut self) -> io::Result<(usize, usize)> {
        for i in 0..self.cfg.files {
            let name = format!("src/module_{i}.txt");
            let body: Vec<String> = (0..self.cfg.lines_per_file).map(|_| self.fresh()).collect();
            self.repo.write(&name, &(body.join("\n") + "\n"))?;
            self.files.push(name);
        }
        self.repo.commit("Initial import", DEVELOPERS[0], self.clock)?;
        let (mut merges, mut conflicts, mut branch_no) = (0, 0, 0);
        while merges < self.cfg.merges_per_repo {
            let concurrent = self.rng.gen_range(1..=3);
            let mut branches = Vec::new();
            for _ in 0..concurrent {
                branch_no += 1;
                let name = format!("topic/{branch_no}");
                let dev = DEVELOPERS.choose(&mut self.rng).unwrap().to_string();
                // small topics touch few lines, large ones rewrite long runs
                let size = self.rng.gen_range(1..=6);
                let span = if self.rng.gen_bool(0.3) { 8 } else { 2 };
                self.repo.branch(&name, "main")?;
                self.repo.checkout(&name)?;
                self.work(size, span, &dev)?;
                self.repo.checkout("main")?;
                branches.push((name, dev));
            }
            if self.rng.gen_bool(0.5) {
                let dev = DEVELOPERS.choose(&mut self.rng).unwrap().to_string();
                let n = self.rng.gen_range(1..=3);
                self.work(n, 3, &dev)?;
            }
            for (name, dev) in branches {
                if merges == self.cfg.merges_per_repo {
                    break;
                }
                let t = self.tick(240);
                let (_, conflicted) = self.repo.merge(&[name.as_str()], &format!("Merge branch '{name}'"), &dev, t)?;
                merges += 1;
                conflicts += usize::from(conflicted);
            }
        }
        Ok((merges, conflicts))
    }
}

/// Generates `cfg.repos` repositories below `root` with simulated
/// multi-developer topic branches merged back into `main`.
pub fn generate_corpus(root: &Path, cfg: CorpusConfig) -> io::Result<Vec<CorpusRepo>> {
    const LANGUAGES: [&str; 3] = ["Java", "Python", "Go"];
    let mut out = Vec::new();
    for i in 0..cfg.repos {
        let name = format!("synthetic-{i}");
        let path = root.join(&name);
        let repo = FixtureRepo::init(&path)?;
        let mut sim = Simulator {
            repo: &repo,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1000).wrapping_add(i as u64)),
            files: Vec::new(),
            clock: T0,
            token: 0,
            cfg,
        };
        let (merges, conflicts) = sim.run()?;
        out.push(CorpusRepo {
            name,
            language: LANGUAGES[i % LANGUAGES.len()].to_string(),
            path,
            merges,
            conflicts,
        });
    }
    Ok(out)
}

/// Writes a repository catalog CSV pointing at local repositories.
pub fn write_catalog(path: &Path, repos: &[(String, PathBuf, String)]) -> io::Result<()> {
    let mut text = String::from("name,url,language,skip\n");
    for (name, repo, language) in repos {
        text.push_str(&format!("{name},{},{language},0\n", repo.display()));
    }
    fs::write(path, text)
}

/// Catalog entries for a generated corpus.
pub fn corpus_catalog(path: &Path, corpus: &[CorpusRepo]) -> io::Result<()> {
    let entries: Vec<_> = corpus
        .iter()
        .map(|r| (r.name.clone(), r.path.clone(), r.language.clone()))
        .collect();
    write_catalog(path, &entries)
}
