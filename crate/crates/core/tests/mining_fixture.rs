use std::fs;
use std::path::Path;

use premerge_core::dataset::{self, RECORDS_FILE};
use premerge_core::features::{extract_feature_vector, Operator};
use premerge_core::git::{self, CommitId};
use premerge_core::miner::{enumerate_merges_at, Outcome, ReplayWorktree};
use premerge_core::pipeline::{self, MineOptions};
use premerge_core::Label;
use premerge_fixtures::{corpus_catalog, mining_fixture, write_catalog, CorpusRepo, MiningFixture};

fn build(dir: &Path) -> MiningFixture {
    mining_fixture(&dir.join("repo")).expect("fixture builds")
}

fn id(s: &str) -> CommitId {
    CommitId::parse(s).unwrap()
}

#[test]
fn enumeration_skips_octopus_and_finds_bases() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let head = git::resolve_commit(fx.repo.path(), "HEAD").unwrap().unwrap();
    let found = enumerate_merges_at(fx.repo.path(), "fixture", &head, 1000).unwrap();
    assert_eq!(found.merges_found, 6);
    assert_eq!(found.octopus_skipped, 1);
    assert_eq!(found.scenarios.len(), 5);
    assert!(found.scenarios.iter().all(|s| s.merge_commit.as_str() != fx.octopus));
    for expected in &fx.scenarios {
        let s = found
            .scenarios
            .iter()
            .find(|s| s.merge_commit.as_str() == expected.merge)
            .unwrap_or_else(|| panic!("{} not enumerated", expected.name));
        assert_eq!(s.parent1, id(&expected.parent1), "{}", expected.name);
        assert_eq!(s.parent2, id(&expected.parent2), "{}", expected.name);
        assert_eq!(s.ancestor, id(&expected.ancestor), "{}", expected.name);
        assert!(!s.multi_base);
    }
}

#[test]
fn merge_limit_caps_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let head = git::resolve_commit(fx.repo.path(), "HEAD").unwrap().unwrap();
    assert_eq!(enumerate_merges_at(fx.repo.path(), "fixture", &head, 2).unwrap().scenarios.len(), 2);
}

#[test]
fn replay_labels_and_features_match_hand_computed_values() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let head = git::resolve_commit(fx.repo.path(), "HEAD").unwrap().unwrap();
    let found = enumerate_merges_at(fx.repo.path(), "fixture", &head, 1000).unwrap();
    let mut wt = ReplayWorktree::create(fx.repo.path(), &dir.path().join("wt")).unwrap();
    for expected in &fx.scenarios {
        let s = found
            .scenarios
            .iter()
            .find(|s| s.merge_commit.as_str() == expected.merge)
            .unwrap();
        let label = wt.replay(s).unwrap();
        let want = if expected.conflict { Outcome::Conflict } else { Outcome::Clean };
        assert_eq!(label.outcome, want, "{}: {}", expected.name, label.detail);
        if expected.conflict {
            assert!(!label.conflicting_paths.is_empty());
        }
        let fv = extract_feature_vector(fx.repo.path(), s, Operator::Norm1, None).unwrap();
        let got = fv.values();
        assert_eq!(got.len(), 28);
        for (i, (g, w)) in got.iter().zip(expected.features.iter()).enumerate() {
            assert_eq!(g, w, "{}: feature {i}", expected.name);
        }
    }
    assert!(!wt.is_quarantined());
    let status = git::run_git(wt.path(), &["status", "--porcelain"], git::DEFAULT_TIMEOUT).unwrap();
    assert!(status.stdout.is_empty());
}

#[test]
fn replay_leaves_main_checkout_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let before = fx.repo.head().unwrap();
    let head = git::resolve_commit(fx.repo.path(), "HEAD").unwrap().unwrap();
    let found = enumerate_merges_at(fx.repo.path(), "fixture", &head, 1000).unwrap();
    {
        let mut wt = ReplayWorktree::create(fx.repo.path(), &dir.path().join("wt")).unwrap();
        for s in &found.scenarios {
            wt.replay(s).unwrap();
        }
    }
    assert_eq!(fx.repo.head().unwrap(), before);
    let status = fx.repo.git(&["status", "--porcelain"]).unwrap();
    assert!(status.stdout.is_empty());
    assert!(!dir.path().join("wt").exists());
}

fn mine_options(dir: &Path, catalog: &Path) -> MineOptions {
    MineOptions {
        workdir: dir.join("work"),
        catalog: catalog.to_path_buf(),
        dataset: dir.join("data"),
        merge_limit: 1000,
        operator: Operator::Norm1,
        jobs: 2,
        size_cap: 1 << 30,
        language: None,
    }
}

#[test]
fn mine_writes_labelled_records_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let catalog = dir.path().join("catalog.csv");
    write_catalog(&catalog, &[("fixture".into(), fx.repo.path().to_path_buf(), "Java".into())]).unwrap();
    let opts = mine_options(dir.path(), &catalog);

    let first = pipeline::mine(&opts).unwrap();
    assert_eq!(first.records_written, 5, "{:?}", first.meta);
    let s = first.meta.summary;
    assert_eq!((s.conflicts, s.cleans, s.octopus_skipped, s.replay_errors), (2, 3, 1, 0));
    let ds = dataset::load_dataset(&opts.dataset, None).unwrap();
    for expected in &fx.scenarios {
        let r = ds
            .records
            .iter()
            .find(|r| r.scenario_key.merge_commit == expected.merge)
            .unwrap();
        let want = if expected.conflict { Label::Conflict } else { Label::Clean };
        assert_eq!(r.label, want);
        assert_eq!(r.features, expected.features.to_vec());
        assert_eq!(r.language, "Java");
    }
    let bytes = fs::read(opts.dataset.join(RECORDS_FILE)).unwrap();

    let second = pipeline::mine(&opts).unwrap();
    assert_eq!(second.records_written, 0);
    assert_eq!(second.records_total, 5);
    assert_eq!(fs::read(opts.dataset.join(RECORDS_FILE)).unwrap(), bytes);
}

#[test]
fn empty_catalog_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("catalog.csv");
    write_catalog(&catalog, &[]).unwrap();
    assert!(pipeline::mine(&mine_options(dir.path(), &catalog)).is_err());
}

#[test]
fn unreachable_repo_does_not_abort_batch() {
    let dir = tempfile::tempdir().unwrap();
    let fx = build(dir.path());
    let catalog = dir.path().join("catalog.csv");
    let corpus = [
        CorpusRepo {
            name: "missing".into(),
            language: "Java".into(),
            path: dir.path().join("does-not-exist"),
            merges: 0,
            conflicts: 0,
        },
        CorpusRepo {
            name: "fixture".into(),
            language: "Java".into(),
            path: fx.repo.path().to_path_buf(),
            merges: 5,
            conflicts: 2,
        },
    ];
    corpus_catalog(&catalog, &corpus).unwrap();
    let out = pipeline::mine(&mine_options(dir.path(), &catalog)).unwrap();
    assert_eq!(out.records_written, 5);
    assert_eq!(out.meta.repos[0].status, "CloneFailed");
}

#[test]
fn parallel_replay_matches_serial() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = premerge_fixtures::generate_corpus(
        &dir.path().join("corpus"),
        premerge_fixtures::CorpusConfig {
            repos: 1,
            merges_per_repo: 25,
            ..Default::default()
        },
    )
    .unwrap();
    let catalog = dir.path().join("catalog.csv");
    corpus_catalog(&catalog, &corpus).unwrap();
    let run = |jobs: usize, name: &str| {
        let mut opts = mine_options(&dir.path().join(name), &catalog);
        opts.jobs = jobs;
        let out = pipeline::mine(&opts).unwrap();
        assert_eq!(out.meta.summary.replay_errors, 0);
        fs::read(opts.dataset.join(RECORDS_FILE)).unwrap()
    };
    let serial = run(1, "serial");
    for round in 0..3 {
        assert_eq!(run(6, &format!("parallel-{round}")), serial);
    }
}
