//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use premerge_core::analytics::{correlation_report_rows, feature_importance, rank_with_ties, spearman, Strength};
use premerge_core::dataset::RECORDS_FILE;
use premerge_core::evaluator::{confusion, prf};
use premerge_core::features::{extract_feature_vector, Operator};
use premerge_core::git;
use premerge_core::learner::{fit_baseline1, fit_tree, Classifier, HyperParams, TrainingData, TreeModel};
use premerge_core::miner::{enumerate_merges_at, Outcome, ReplayWorktree};
use premerge_core::pipeline::{self, MineOptions};
use premerge_core::Label;
use premerge_fixtures::oracles::{brute_force_ranks, cart, cart_predict, precision_recall, spearman_rho, OracleNode, OracleParams};
use premerge_fixtures::{corpus_catalog, generate_corpus, mining_fixture, write_catalog, CorpusConfig, CorpusRepo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn label(c: bool) -> Label {
    if c {
        Label::Conflict
    } else {
        Label::Clean
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn premerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premerge"))
        .args(args)
        .env_remove("PREMERGE_WORKDIR")
        .output()
        .expect("premerge binary runs")
}

fn premerge_ok(args: &[&str]) -> Result<Output, String> {
    let out = premerge(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "premerge {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn metric_worked_example() -> Check {
    let truth: Vec<Label> = "CSSCSS".chars().map(|c| label(c == 'C')).collect();
    let pred: Vec<Label> = "SSCCSC".chars().map(|c| label(c == 'C')).collect();
    let c = confusion(&truth, &pred, Label::Conflict).map_err(|e| e.to_string())?;
    let mc = prf(&c);
    let ms = prf(&c.flipped());
    let want = [(mc.recall, 0.5), (mc.precision, 1.0 / 3.0), (ms.recall, 0.5), (ms.precision, 2.0 / 3.0)];
    ensure!(want.iter().all(|&(g, w)| close(g, w)), "got {want:?}");
    let tb: Vec<bool> = truth.iter().map(|l| l.is_conflict()).collect();
    let pb: Vec<bool> = pred.iter().map(|l| l.is_conflict()).collect();
    ensure!(precision_recall(&tb, &pb) == (Some((1, 3)), Some((1, 2))), "rational oracle disagrees");
    Ok(format!("P_C={:.4} R_C={:.4} P_S={:.4} R_S={:.4}", mc.precision, mc.recall, ms.precision, ms.recall))
}

fn baseline1_law() -> Check {
    let n = 100_000;
    let prior = 0.0812;
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<Label> = (0..n).map(|_| label(rng.gen_bool(prior))).collect();
        let data = TrainingData::new(vec![vec![0.0]; n], truth.clone()).map_err(|e| e.to_string())?;
        let model = fit_baseline1(&data).map_err(|e| e.to_string())?;
        let pred: Vec<Label> = (0..n).map(|_| model.predict(&mut rng)).collect();
        let c = confusion(&truth, &pred, Label::Conflict).map_err(|e| e.to_string())?;
        let (f1_c, f1_s) = (prf(&c).f1, prf(&c.flipped()).f1);
        ensure!((f1_c - prior).abs() <= 0.01, "seed {seed}: f1_C {f1_c}");
        ensure!((f1_s - (1.0 - prior)).abs() <= 0.01, "seed {seed}: f1_S {f1_s}");
        worst = worst.max((f1_c - prior).abs()).max((f1_s - (1.0 - prior)).abs());
    }
    Ok(format!("5 seeds, max deviation {worst:.4}"))
}

fn fixture_ground_truth() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = mining_fixture(&dir.path().join("repo")).map_err(|e| e.to_string())?;
    let renames = fx.repo.git(&["log", "--all", "-M", "--diff-filter=R", "--format=%H"]).map_err(|e| e.to_string())?;
    ensure!(!renames.stdout.is_empty(), "fixture has no rename");
    let head = git::resolve_commit(fx.repo.path(), "HEAD").map_err(|e| e.to_string())?.ok_or("no HEAD")?;
    let found = enumerate_merges_at(fx.repo.path(), "fixture", &head, 1000).map_err(|e| e.to_string())?;
    ensure!(found.octopus_skipped == 1, "octopus skipped {}", found.octopus_skipped);
    ensure!(found.scenarios.iter().all(|s| s.merge_commit.as_str() != fx.octopus), "octopus enumerated");
    let clean = fx.scenarios.iter().filter(|s| !s.conflict).count();
    ensure!(clean >= 3 && fx.scenarios.len() - clean >= 2, "fixture too small");
    ensure!(found.scenarios.len() == fx.scenarios.len(), "{} scenarios", found.scenarios.len());
    let mut wt = ReplayWorktree::create(fx.repo.path(), &dir.path().join("wt")).map_err(|e| e.to_string())?;
    for e in &fx.scenarios {
        let s = found
            .scenarios
            .iter()
            .find(|s| s.merge_commit.as_str() == e.merge)
            .ok_or_else(|| format!("{} missing", e.name))?;
        let got = wt.replay(s).map_err(|err| err.to_string())?.outcome;
        let want = if e.conflict { Outcome::Conflict } else { Outcome::Clean };
        ensure!(got == want, "{}: {got:?}", e.name);
        let fv = extract_feature_vector(fx.repo.path(), s, Operator::Norm1, None).map_err(|err| err.to_string())?;
        ensure!(fv.values() == e.features.to_vec(), "{}: {:?} != {:?}", e.name, fv.values(), e.features);
    }
    Ok(format!("{} scenarios, 28 features each, octopus skipped", fx.scenarios.len()))
}

fn spearman_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    while cases < 1000 {
        let n = rng.gen_range(3..=50);
        let levels = rng.gen_range(2..=15);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 - 3.5).collect();
        if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
            continue;
        }
        cases += 1;
        ensure!(rank_with_ties(&x) == brute_force_ranks(&x), "ranks differ on {x:?}");
        let got = spearman(&x, &y).map_err(|e| e.to_string())?;
        let d = (got.0 - spearman_rho(&x, &y)).abs();
        ensure!(d <= 1e-12, "case {cases}: |drho| = {d}");
        worst = worst.max(d);
        let fx: Vec<f64> = x.iter().map(|v| v.powi(3) + 10.0 * v).collect();
        let fy: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        ensure!(spearman(&fx, &fy).map_err(|e| e.to_string())? == got, "case {cases}: not transform invariant");
    }
    Ok(format!("1000 pairs, max |drho| {worst:e}"))
}

fn flatten(tree: &TreeModel) -> Vec<OracleNode> {
    fn walk(tree: &TreeModel, at: usize, out: &mut Vec<OracleNode>) {
        let n = &tree.nodes[at];
        out.push(OracleNode {
            conflicts: n.counts.conflicts,
            cleans: n.counts.cleans,
            depth: n.depth,
            split: n.split.map(|s| (s.feature, s.threshold)),
        });
        if let Some(s) = n.split {
            walk(tree, s.left, out);
            walk(tree, s.right, out);
        }
    }
    let mut out = Vec::new();
    walk(tree, 0, &mut out);
    out
}

fn cart_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut splits = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=30);
        let d = rng.gen_range(1..=3);
        let levels = rng.gen_range(2..=6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..levels) as f64).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let hp = HyperParams::new(rng.gen_range(1..=3), rng.gen_range(2..=5), rng.gen_range(1..=4), 1);
        let data = TrainingData::new(x.clone(), y.iter().map(|&c| label(c)).collect()).map_err(|e| e.to_string())?;
        let tree = fit_tree(&data, &hp, None).map_err(|e| e.to_string())?;
        let oracle = cart(
            &x,
            &y,
            OracleParams {
                min_samples_leaf: hp.min_samples_leaf,
                min_samples_split: hp.min_samples_split,
                max_depth: hp.max_depth,
            },
        );
        ensure!(flatten(&tree) == oracle, "case {case}: structure differs");
        for row in &x {
            let got = tree.predict(row).map_err(|e| e.to_string())?.is_conflict();
            ensure!(got == cart_predict(&oracle, row), "case {case}: prediction differs");
        }
        splits += oracle.iter().filter(|n| n.split.is_some()).count();
    }
    Ok(format!("200 datasets, {splits} splits compared"))
}

fn importance_pattern() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let conflict = rng.gen_bool(0.25);
        let mut row: Vec<f64> = (0..28).map(|_| rng.gen_range(0..20) as f64).collect();
        row[0] = if conflict { rng.gen_range(3..8) } else { rng.gen_range(0..3) } as f64;
        rows.push(row);
        labels.push(label(conflict));
    }
    let data = TrainingData::new(rows.clone(), labels.clone()).map_err(|e| e.to_string())?;
    let tree = fit_tree(&data, &HyperParams::new(10, 5, 7, 1), None).map_err(|e| e.to_string())?;
    let sets = feature_importance(&tree).map_err(|e| e.to_string())?;
    ensure!(sets[0].importance >= 0.9, "FS1 importance {}", sets[0].importance);
    let corr = correlation_report_rows(&rows, &labels).map_err(|e| e.to_string())?;
    ensure!(corr[0].strength == Strength::Strong, "FS1 {:?} rho {}", corr[0].strength, corr[0].coefficient);
    Ok(format!("FS1 importance {:.3}, rho {:.3} ({})", sets[0].importance, corr[0].coefficient, corr[0].strength.as_str()))
}

/// Shared state: criterion 7 mines the corpus that 8 queries.
#[derive(Default)]
struct Desk {
    corpus: Vec<CorpusRepo>,
    model: Option<PathBuf>,
}

fn end_to_end(root: &Path, desk: &mut Desk) -> Check {
    desk.corpus = generate_corpus(&root.join("corpus"), CorpusConfig::default()).map_err(|e| e.to_string())?;
    let catalog = root.join("catalog.csv");
    corpus_catalog(&catalog, &desk.corpus).map_err(|e| e.to_string())?;
    let opts = MineOptions {
        workdir: root.join("work"),
        catalog,
        dataset: root.join("dataset"),
        merge_limit: 1000,
        operator: Operator::Norm1,
        jobs: 4,
        size_cap: 1 << 30,
        language: None,
    };
    let mined = pipeline::mine(&opts).map_err(|e| e.to_string())?;
    let s = mined.meta.summary;
    ensure!(mined.records_total >= 200, "only {} scenarios mined", mined.records_total);
    let (ds, data) = pipeline::load_training(&opts.dataset, None).map_err(|e| e.to_string())?;
    let hp = HyperParams::new(10, 5, 7, 75);
    let reports = pipeline::compare_classifiers(&ds, &data, &hp, 10, 0).map_err(|e| e.to_string())?;
    let f1 = |i: usize| (reports[i].pooled.safe.f1, reports[i].pooled.conflict.f1);
    let (b2, dt, (rf_s, rf)) = (f1(1).1, f1(2).1, f1(3));
    let summary = format!(
        "{} scenarios ({} conflicts), f1_C B1 {:.3} B2 {b2:.3} DT {dt:.3} RF {rf:.3}, RF f1_S {rf_s:.3}",
        mined.records_total,
        s.conflicts,
        f1(0).1
    );
    let model = pipeline::train(
        &ds,
        &data,
        &pipeline::TrainOptions {
            classifier: Classifier::RandomForest,
            hyperparams: hp,
            grid: None,
            k: 10,
            seed: 0,
            language: None,
        },
    )
    .map_err(|e| e.to_string())?;
    let path = root.join("rf.model.json");
    model.model.save(&path).map_err(|e| e.to_string())?;
    desk.model = Some(path);
    ensure!(rf_s > rf, "f1_S <= f1_C: {summary}");
    ensure!(rf >= dt && dt >= b2, "ordering violated: {summary}");
    Ok(summary)
}

fn predict_latency(root: &Path, desk: &Desk) -> Check {
    let model = desk.model.as_ref().ok_or("no model from the end-to-end run")?;
    let repo = &desk.corpus.first().ok_or("no corpus")?.path;
    let merge = Command::new("git")
        .current_dir(repo)
        .args(["rev-list", "--merges", "-1", "HEAD"])
        .output()
        .map_err(|e| e.to_string())?;
    let merge = String::from_utf8_lossy(&merge.stdout).trim().to_string();
    let (r1, r2) = (format!("{merge}^1"), format!("{merge}^2"));
    let before = fs::read(repo.join(".git/HEAD")).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    for _ in 0..20 {
        let start = Instant::now();
        let out = premerge(&["predict", "--repo", p(repo), &r1, &r2, "--model", p(model), "--workdir", p(root)]);
        times.push(start.elapsed());
        ensure!(matches!(out.status.code(), Some(0) | Some(10)), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    }
    ensure!(fs::read(repo.join(".git/HEAD")).map_err(|e| e.to_string())? == before, "predict moved HEAD");
    times.sort();
    let median = times[times.len() / 2];
    ensure!(median < Duration::from_secs(1), "median {median:?}");
    Ok(format!("median {:.1} ms over 20 runs", median.as_secs_f64() * 1000.0))
}

fn determinism_run(corpus_catalog: &Path, root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let work = root.join("work");
    let data = root.join("dataset");
    let model = root.join("model.json");
    let report = root.join("report.json");
    let common = ["--workdir", p(&work), "--seed", "11", "--jobs", "3"];
    fn with<'a>(args: &[&'a str], common: &[&'a str]) -> Vec<&'a str> {
        [args, common].concat()
    }
    premerge_ok(&with(&["mine", "--catalog", p(corpus_catalog), "--dataset", p(&data)], &common))?;
    premerge_ok(&with(&["train", "--dataset", p(&data), "--classifier", "rf", "--estimators", "15", "--out", p(&model)], &common))?;
    premerge_ok(&with(&["evaluate", "--dataset", p(&data), "--classifier", "rf", "--estimators", "15", "--k", "3", "--out", p(&report)], &common))?;
    let read = |path: PathBuf| fs::read(&path).map_err(|e| format!("{}: {e}", path.display()));
    Ok(vec![
        ("dataset".into(), read(data.join(RECORDS_FILE))?),
        ("model".into(), read(model)?),
        ("report".into(), read(report)?),
    ])
}

fn determinism(root: &Path) -> Check {
    let fx = mining_fixture(&root.join("fixture")).map_err(|e| e.to_string())?;
    let small = generate_corpus(
        &root.join("corpus"),
        CorpusConfig {
            repos: 1,
            merges_per_repo: 30,
            ..CorpusConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let catalog = root.join("catalog.csv");
    write_catalog(
        &catalog,
        &[
            ("fixture".into(), fx.repo.path().to_path_buf(), "Java".into()),
            (small[0].name.clone(), small[0].path.clone(), "Java".into()),
        ],
    )
    .map_err(|e| e.to_string())?;
    let a = determinism_run(&catalog, &root.join("a"))?;
    let b = determinism_run(&catalog, &root.join("b"))?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure!(x == y, "{name} payload differs between runs");
    }
    let sizes: Vec<String> = a.iter().map(|(n, x)| format!("{n} {}B", x.len())).collect();
    Ok(format!("byte-identical: {}", sizes.join(", ")))
}

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let took = start.elapsed();
    let (ok, detail) = match result {
        Ok(d) if took <= limit => (true, d),
        Ok(d) => (false, format!("{d}; exceeded {limit:?}")),
        Err(e) => (false, e),
    };
    println!(
        "{} [{id}] {name} ({:.2}s / {}s): {detail}",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut desk = Desk::default();
    let secs = Duration::from_secs;
    let results = [
        run(1, "metric worked example", secs(1), metric_worked_example),
        run(2, "baseline #1 law", secs(10), baseline1_law),
        run(3, "fixture mining ground truth", secs(30), fixture_ground_truth),
        run(4, "spearman oracle", secs(10), spearman_oracle),
        run(5, "CART oracle equivalence", secs(60), cart_oracle),
        run(6, "importance pattern", secs(30), importance_pattern),
        run(7, "end-to-end desk run", secs(15 * 60), || end_to_end(&tmp.path().join("e2e"), &mut desk)),
        run(8, "prediction latency", secs(20), || predict_latency(&tmp.path().join("predict"), &desk)),
        run(9, "determinism suite", secs(5 * 60), || determinism(&tmp.path().join("det"))),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
