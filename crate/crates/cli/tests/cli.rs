use std::path::Path;
use std::process::{Command, Output};

use premerge_fixtures::{mining_fixture, write_catalog, FixtureRepo, MiningFixture, T0};

fn premerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premerge"))
        .args(args)
        .env_remove("PREMERGE_WORKDIR")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Fixture repository mined into `dir/data` with the given operator.
fn mined(dir: &Path, operator: &str) -> MiningFixture {
    let fx = mining_fixture(&dir.join("repo")).unwrap();
    let catalog = dir.join("catalog.csv");
    write_catalog(&catalog, &[("fixture".into(), fx.repo.path().to_path_buf(), "Java".into())]).unwrap();
    let work = dir.join("work");
    let out = premerge(&[
        "mine",
        "--catalog",
        p(&catalog),
        "--dataset",
        p(&dir.join("data")),
        "--workdir",
        p(&work),
        "--operator",
        operator,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    fx
}

#[test]
fn mine_fails_when_nothing_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("catalog.csv");
    write_catalog(&catalog, &[("gone".into(), dir.path().join("nope"), "Java".into())]).unwrap();
    let out = premerge(&["mine", "--catalog", p(&catalog), "--workdir", p(&dir.path().join("w"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn missing_git_is_an_environment_error() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("catalog.csv");
    write_catalog(&catalog, &[("x".into(), dir.path().join("x"), "Java".into())]).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_premerge"))
        .args(["mine", "--catalog", p(&catalog), "--workdir", p(&dir.path().join("w"))])
        .env("PATH", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn extract_prints_named_features() {
    let dir = tempfile::tempdir().unwrap();
    let fx = mining_fixture(&dir.path().join("repo")).unwrap();
    let out = premerge(&["extract", "--repo", p(fx.repo.path()), "--merge", &fx.scenarios[0].merge]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["names"].as_array().unwrap().len(), 28);
    let values: Vec<f64> = v["values"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(values, fx.scenarios[0].features.to_vec());
}

#[test]
fn predict_reports_verdict_and_leaves_repo_alone() {
    let dir = tempfile::tempdir().unwrap();
    let fx = mined(dir.path(), "norm-1");
    let model = dir.path().join("m.json");
    let data = dir.path().join("data");
    let out = premerge(&["train", "--dataset", p(&data), "--classifier", "dt", "--leaf", "1", "--split", "2", "--out", p(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let status = |r: &FixtureRepo| {
        let a = r.git(&["status", "--porcelain"]).unwrap().stdout;
        let b = r.git(&["for-each-ref"]).unwrap().stdout;
        (a, b, r.head().unwrap())
    };
    let before = status(&fx.repo);
    for s in &fx.scenarios {
        let out = premerge(&["predict", "--repo", p(fx.repo.path()), &s.parent1, &s.parent2, "--model", p(&model)]);
        let want = if s.conflict { 10 } else { 0 };
        assert_eq!(out.status.code(), Some(want), "{}: {}", s.name, stderr(&out));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["verdict"], if s.conflict { "conflict" } else { "safe" });
        assert_eq!(v["merge_base"], s.ancestor.as_str());
    }
    assert_eq!(status(&fx.repo), before);
}

#[test]
fn default_forest_and_identical_refs() {
    let dir = tempfile::tempdir().unwrap();
    let fx = mined(dir.path(), "norm-1");
    let model = dir.path().join("rf.json");
    let out = premerge(&["train", "--dataset", p(&dir.path().join("data")), "--out", p(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    let hp = &m["hyperparams"];
    let tuple = ["min_samples_leaf", "min_samples_split", "max_depth", "n_estimators"].map(|k| hp[k].as_u64().unwrap());
    assert_eq!(tuple, [10, 5, 7, 75]);

    let out = premerge(&["predict", "--repo", p(fx.repo.path()), "main", "main", "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "safe");
    assert_eq!(v["features"][0], 0.0);
}

#[test]
fn predict_on_unrelated_refs_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let fx = mined(dir.path(), "norm-1");
    let model = dir.path().join("m.json");
    let out = premerge(&["train", "--dataset", p(&dir.path().join("data")), "--classifier", "dt", "--out", p(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));
    fx.repo.git(&["checkout", "-q", "--orphan", "island"]).unwrap();
    fx.repo.git(&["rm", "-rq", "--cached", "."]).unwrap();
    fx.repo.write("island.txt", "alone\n").unwrap();
    fx.repo.commit("island", "a@example.com", T0).unwrap();
    let out = premerge(&["predict", "--repo", p(fx.repo.path()), "main", "island", "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn model_and_dataset_schema_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    mined(&dir.path().join("a"), "norm-1");
    mined(&dir.path().join("b"), "concatenation");
    let model = dir.path().join("m.json");
    let out = premerge(&["train", "--dataset", p(&dir.path().join("a/data")), "--classifier", "dt", "--out", p(&model)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = premerge(&["evaluate", "--dataset", p(&dir.path().join("b/data")), "--model", p(&model)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema") || stderr(&out).contains("operator"), "{}", stderr(&out));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let fx = mining_fixture(&dir.path().join("repo")).unwrap();
    let catalog = dir.path().join("catalog.csv");
    write_catalog(&catalog, &[("fixture".into(), fx.repo.path().to_path_buf(), "Java".into())]).unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "workdir = {:?}\ncatalog = {:?}\nmerge_limit = 2\n",
            p(&dir.path().join("w")),
            p(&catalog)
        ),
    )
    .unwrap();
    let out = premerge(&["mine", "--config", p(&config)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let records = std::fs::read_to_string(dir.path().join("w/dataset/dataset.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "merge_limt = 2\n").unwrap();
    let out = premerge(&["mine", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(1));
}
