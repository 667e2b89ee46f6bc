//! End-to-end commands shared by the CLI and the test suites.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, AnalyticsReport};
use crate::catalog::{self, CatalogError, LocalRepo, RepoSpec};
use crate::dataset::{self, DatasetError, DatasetMeta, DatasetRecord, DatasetWriter, ExtractionMeta, LabeledDataset, RepoMiningReport};
use crate::evaluator::{self, EvalError, EvaluationReport};
use crate::features::{self, FeatureError, Operator, ScenarioKey, SCHEMA_VERSION};
use crate::git::{self, CommitId, GitError};
use crate::learner::{
    grid_search, Classifier, Grid, GridResult, HyperParams, LearnerError, ModelFile, ModelSpec, TrainingData,
};
use crate::miner::{self, MergeLabel, MergeScenario, MinerError, MiningSummary, Outcome, ReplayWorktree};
use crate::Label;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unusable environment: {0}")]
    Environment(String),
    #[error("refs {0} and {1} share no history")]
    UnrelatedRefs(String, String),
    #[error("cannot resolve {0}")]
    UnknownRef(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Git(GitError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl From<GitError> for PipelineError {
    fn from(e: GitError) -> Self {
        match e {
            GitError::Environment(msg) => PipelineError::Environment(msg),
            other => PipelineError::Git(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MineOptions {
    pub workdir: PathBuf,
    pub catalog: PathBuf,
    /// Output dataset directory.
    pub dataset: PathBuf,
    pub merge_limit: usize,
    pub operator: Operator,
    pub jobs: usize,
    pub size_cap: u64,
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineOutcome {
    pub meta: DatasetMeta,
    pub records_written: usize,
    pub records_total: usize,
}

struct Labeled {
    scenario: MergeScenario,
    result: Result<(MergeLabel, Option<Vec<f64>>), String>,
}

fn replay_and_extract(wt: &mut ReplayWorktree, repo: &Path, s: &MergeScenario, op: Operator) -> Result<(MergeLabel, Option<Vec<f64>>), String> {
    let label = wt.replay(s).map_err(|e| e.to_string())?;
    if label.outcome == Outcome::ReplayError {
        return Ok((label, None));
    }
    let fv = features::extract_feature_vector(repo, s, op, None).map_err(|e| e.to_string())?;
    Ok((label, Some(fv.values())))
}

/// Replays `scenarios` on a pool of `jobs` worktrees; results keep input order.
fn label_scenarios(repo: &LocalRepo, scenarios: Vec<MergeScenario>, workdir: &Path, op: Operator, jobs: usize) -> Result<Vec<Labeled>, MinerError> {
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let base = workdir.join("worktrees").join(repo.spec.dir_name());
    let next = AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Labeled>>> = scenarios.iter().map(|_| std::sync::Mutex::new(None)).collect();
    let scenarios = &scenarios;
    let worktree_admin = std::sync::Mutex::new(());
    let pool: Vec<std::sync::Mutex<ReplayWorktree>> = (0..jobs)
        .map(|id| ReplayWorktree::create(&repo.path, &base.join(id.to_string())).map(std::sync::Mutex::new))
        .collect::<Result<_, _>>()?;
    let worker = |id: usize| -> Result<(), MinerError> {
        let mut wt = pool[id].lock().unwrap();
        loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            if i >= scenarios.len() {
                return Ok(());
            }
            if wt.is_quarantined() {
                let _admin = worktree_admin.lock().unwrap();
                *wt = ReplayWorktree::create(&repo.path, &base.join(format!("{id}-{i}")))?;
            }
            let result = replay_and_extract(&mut wt, &repo.path, &scenarios[i], op);
            *slots[i].lock().unwrap() = Some(Labeled {
                scenario: scenarios[i].clone(),
                result,
            });
        }
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MinerError::Precondition(e.to_string()))?;
    threads.install(|| (0..jobs).into_par_iter().map(worker).collect::<Result<Vec<()>, _>>())?;
    drop(pool);
    Ok(slots.into_iter().filter_map(|m| m.into_inner().unwrap()).collect())
}

/// Acquires every catalog repository, labels its merges by replay and
/// appends feature records. Per-repository failures are reported in the
/// returned metadata and never abort the batch.
pub fn mine(opts: &MineOptions) -> Result<MineOutcome, PipelineError> {
    let git_version = git::ensure_git()?;
    let specs: Vec<RepoSpec> = catalog::load_catalog(&opts.catalog)?
        .into_iter()
        .filter(|s| opts.language.as_deref().is_none_or(|l| s.language.eq_ignore_ascii_case(l)))
        .collect();
    if specs.is_empty() {
        return Err(PipelineError::Input(format!("catalog {} lists no repositories", opts.catalog.display())));
    }
    let mut writer = DatasetWriter::open(&opts.dataset)?;
    let mut meta = DatasetMeta::new(opts.operator, git_version.clone());
    let extraction = ExtractionMeta {
        operator: opts.operator,
        git_version,
        schema_version: SCHEMA_VERSION.into(),
    };
    let mut written = 0;
    for repo in catalog::acquire_all(&specs, &opts.workdir, opts.size_cap, opts.jobs) {
        let mut report = RepoMiningReport {
            repo: repo.spec.name.clone(),
            language: repo.spec.language.clone(),
            status: format!("{:?}", repo.status),
            detail: repo.detail.clone(),
            summary: MiningSummary::default(),
        };
        if repo.is_ready() {
            match mine_repo(&repo, opts, &extraction, &mut writer) {
                Ok((summary, n)) => {
                    report.summary = summary;
                    written += n;
                }
                Err(e) => {
                    log::warn!("{}: {e}", repo.spec.name);
                    report.status = "Failed".into();
                    report.detail = e.to_string();
                }
            }
        } else {
            log::warn!("{}: {:?} ({})", repo.spec.name, repo.status, repo.detail);
        }
        meta.summary.add(&report.summary);
        meta.repos.push(report);
    }
    let records_total = writer.len();
    drop(writer);
    dataset::write_meta(&opts.dataset, &meta)?;
    if records_total > 0 {
        let ds = dataset::load_dataset(&opts.dataset, None)?;
        dataset::export_csv(&ds, &opts.dataset.join(dataset::CSV_FILE))?;
    }
    Ok(MineOutcome {
        meta,
        records_written: written,
        records_total,
    })
}

fn mine_repo(
    repo: &LocalRepo,
    opts: &MineOptions,
    extraction: &ExtractionMeta,
    writer: &mut DatasetWriter,
) -> Result<(MiningSummary, usize), PipelineError> {
    let found = miner::enumerate_merges(repo, opts.merge_limit)?;
    let mut summary = MiningSummary {
        merges_found: found.merges_found,
        octopus_skipped: found.octopus_skipped,
        no_base_skipped: found.no_base_skipped,
        ..MiningSummary::default()
    };
    let key = |s: &MergeScenario| ScenarioKey {
        repo: s.repo.clone(),
        merge_commit: s.merge_commit.to_string(),
    };
    let (known, todo): (Vec<_>, Vec<_>) = found.scenarios.into_iter().partition(|s| writer.contains(&key(s)));
    summary.merges_found -= known.len();
    let mut written = 0;
    for item in label_scenarios(repo, todo, &opts.workdir, opts.operator, opts.jobs)? {
        let (label, values) = match item.result {
            Ok((label, Some(values))) => (label, values),
            Ok((label, None)) => {
                summary.record(label.outcome);
                continue;
            }
            Err(e) => {
                log::warn!("{} {}: {e}", item.scenario.repo, item.scenario.merge_commit);
                summary.record(Outcome::ReplayError);
                continue;
            }
        };
        summary.record(label.outcome);
        let record = DatasetRecord {
            scenario_key: key(&item.scenario),
            language: repo.spec.language.clone(),
            merge_timestamp: item.scenario.merge_timestamp,
            features: values,
            label: if label.outcome == Outcome::Conflict { Label::Conflict } else { Label::Clean },
            meta: extraction.clone(),
        };
        if writer.append_record(&record)? {
            written += 1;
        }
    }
    Ok((summary, written))
}

fn resolve(repo: &Path, rev: &str) -> Result<CommitId, PipelineError> {
    git::resolve_commit(repo, rev)?.ok_or_else(|| PipelineError::UnknownRef(rev.to_string()))
}

/// Features of the two branches `merge-base..ref1` and `merge-base..ref2`,
/// with the merge base used.
pub fn extract_refs(repo: &Path, ref1: &str, ref2: &str, operator: Operator) -> Result<(features::FeatureVector, CommitId), PipelineError> {
    let (p1, p2) = (resolve(repo, ref1)?, resolve(repo, ref2)?);
    let base = miner::find_ancestor(repo, &p1, &p2)?
        .ok_or_else(|| PipelineError::UnrelatedRefs(ref1.to_string(), ref2.to_string()))?;
    let key = ScenarioKey {
        repo: repo.display().to_string(),
        merge_commit: format!("{p1}+{p2}"),
    };
    let fv = features::extract_between(repo, key, &p1, &p2, &base.base, operator)?;
    Ok((fv, base.base))
}

/// Features of an existing two-parent merge commit.
pub fn extract_merge(repo: &Path, merge: &str, operator: Operator) -> Result<features::FeatureVector, PipelineError> {
    let id = resolve(repo, merge)?;
    let meta = git::commit_meta(repo, &id)?;
    if meta.parent_ids.len() != 2 {
        return Err(PipelineError::Input(format!("{merge} has {} parents, expected 2", meta.parent_ids.len())));
    }
    let (p1, p2) = (&meta.parent_ids[0], &meta.parent_ids[1]);
    let base = miner::find_ancestor(repo, p1, p2)?
        .ok_or_else(|| PipelineError::UnrelatedRefs(p1.to_string(), p2.to_string()))?;
    let scenario = MergeScenario {
        repo: repo.display().to_string(),
        merge_commit: id,
        parent1: p1.clone(),
        parent2: p2.clone(),
        multi_base: base.is_multi(),
        ancestor: base.base,
        merge_timestamp: meta.author_timestamp,
    };
    Ok(features::extract_feature_vector(repo, &scenario, operator, None)?)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub classifier: Classifier,
    pub hyperparams: HyperParams,
    /// Run a cross-validated grid search before the final fit.
    pub grid: Option<Grid>,
    pub k: usize,
    pub seed: u64,
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: ModelFile,
    pub grid: Option<GridResult>,
}

pub fn load_training(dataset_path: &Path, language: Option<&str>) -> Result<(LabeledDataset, TrainingData), PipelineError> {
    let ds = dataset::load_dataset(dataset_path, language)?;
    if ds.is_empty() {
        return Err(PipelineError::Input(format!(
            "no records in {}{}",
            dataset_path.display(),
            language.map(|l| format!(" for language {l}")).unwrap_or_default()
        )));
    }
    let data = TrainingData::from_dataset(&ds)?;
    Ok((ds, data))
}

pub fn train(ds: &LabeledDataset, data: &TrainingData, opts: &TrainOptions) -> Result<TrainOutcome, PipelineError> {
    let mut hp = opts.hyperparams.with_seed(opts.seed);
    let grid = match &opts.grid {
        Some(g) => {
            let result = grid_search(data, opts.classifier, &hp, g, opts.k, opts.seed)?;
            hp = result.best;
            Some(result)
        }
        None => None,
    };
    let spec = ModelSpec::new(opts.classifier, hp);
    let model = spec.fit(data)?;
    let mut file = ModelFile::new(&spec, model, ds.operator, data.n_features());
    file.language = opts.language.clone();
    file.dataset_fingerprint = Some(ds.fingerprint());
    Ok(TrainOutcome { model: file, grid })
}

/// Cross-validates `spec` on the dataset.
pub fn evaluate_cv(ds: &LabeledDataset, data: &TrainingData, spec: &ModelSpec, k: usize, seed: u64) -> Result<EvaluationReport, PipelineError> {
    let mut report = evaluator::cross_validate(spec, data, k, seed)?;
    report.dataset = ds.fingerprint();
    Ok(report)
}

/// Scores a saved model on the dataset without refitting.
pub fn evaluate_model(ds: &LabeledDataset, data: &TrainingData, model: &ModelFile, seed: u64) -> Result<EvaluationReport, PipelineError> {
    model.check_schema(ds.operator, data.n_features())?;
    let mut report = evaluator::evaluate_holdout(&model.model, &model.spec().describe(), data, seed)?;
    report.dataset = ds.fingerprint();
    Ok(report)
}

/// Cross-validates every classifier on identical folds.
pub fn compare_classifiers(ds: &LabeledDataset, data: &TrainingData, hp: &HyperParams, k: usize, seed: u64) -> Result<Vec<EvaluationReport>, PipelineError> {
    let folds = evaluator::stratified_folds(data.labels(), k, seed)?;
    [
        Classifier::Baseline1,
        Classifier::Baseline2,
        Classifier::DecisionTree,
        Classifier::RandomForest,
    ]
    .iter()
    .map(|&c| {
        let spec = ModelSpec::new(c, hp.with_seed(seed));
        let mut r = evaluator::cross_validate_with(&spec, data, &folds, seed, evaluator::FoldStrategy::Stratified)?;
        r.dataset = ds.fingerprint();
        Ok(r)
    })
    .collect()
}

/// Rank correlations plus per-set importances of a decision tree fit with `hp`.
pub fn correlate(ds: &LabeledDataset, data: &TrainingData, hp: &HyperParams, language: Option<String>) -> Result<AnalyticsReport, PipelineError> {
    let correlations = analytics::correlation_report(ds)?;
    let tree = crate::learner::fit_tree(data, hp, None)?;
    let importances = analytics::feature_importance(&tree)?;
    Ok(AnalyticsReport::new(language, ds.len(), correlations, importances))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Safe,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub verdict: Verdict,
    pub vote_fraction: f64,
    pub features: Vec<f64>,
    pub merge_base: String,
    pub elapsed_ms: f64,
}

/// Predicts whether merging `ref2` into `ref1` would conflict. Read-only.
pub fn predict(repo: &Path, ref1: &str, ref2: &str, model: &ModelFile, seed: u64) -> Result<VerdictRecord, PipelineError> {
    let start = Instant::now();
    let operator = model.operator.unwrap_or_default();
    let (fv, base) = extract_refs(repo, ref1, ref2, operator)?;
    let x = fv.values();
    model.check_schema(Some(operator), x.len())?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let p = model.model.predict(&x, &mut rng)?;
    Ok(VerdictRecord {
        verdict: if p.label == Label::Conflict { Verdict::Conflict } else { Verdict::Safe },
        vote_fraction: p.vote_fraction,
        features: x,
        merge_base: base.to_string(),
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    })
}

/// Model path for `language` inside a directory of per-language models.
pub fn model_for_language(dir: &Path, language: &str) -> PathBuf {
    dir.join(format!("{}.model.json", language.to_ascii_lowercase()))
}
