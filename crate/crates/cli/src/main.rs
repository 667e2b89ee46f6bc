//! `premerge`: mine merge scenarios, train conflict predictors and query them.
//!
//! Exit codes: 0 success (for `predict`: safe), 10 predicted conflict,
//! 3 unrelated refs, 2 unusable environment, 1 any other error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use premerge_core::catalog::{DEFAULT_SIZE_CAP, WORKDIR_ENV};
use premerge_core::evaluator::{self, chronological_folds, format_table, FoldStrategy};
use premerge_core::features::feature_names;
use premerge_core::learner::{Classifier, HyperParams, ModelFile, ModelSpec};
use premerge_core::pipeline::{self, MineOptions, PipelineError, TrainOptions, Verdict};
use premerge_core::Operator;
use serde::Serialize;

use config::RunConfig;

const EXIT_ERROR: u8 = 1;
const EXIT_ENVIRONMENT: u8 = 2;
const EXIT_UNRELATED: u8 = 3;
const EXIT_CONFLICT: u8 = 10;

#[derive(Debug, Parser)]
#[command(name = "premerge", version, about = "Predict merge conflicts from git history")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for folds, forests and the random baseline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Working directory for clones, worktrees and default outputs.
    #[arg(long, global = true, env = WORKDIR_ENV)]
    workdir: Option<PathBuf>,
    /// Restrict to repositories/records of this language.
    #[arg(long, global = true)]
    language: Option<String>,
    /// Branch feature combination operator.
    #[arg(long, global = true)]
    operator: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clone catalog repositories, replay their merges and write a dataset.
    Mine {
        /// Repository catalog CSV with columns name,url,language,skip.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Dataset directory (default: <workdir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Merges per repository, newest first.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Print the feature vector of a merge commit or of two refs.
    Extract {
        #[arg(long, default_value = ".")]
        repo: PathBuf,
        /// Existing two-parent merge commit.
        #[arg(long, conflicts_with = "refs")]
        merge: Option<String>,
        /// Two refs to compare through their merge base.
        #[arg(long, num_args = 2, value_names = ["REF1", "REF2"])]
        refs: Option<Vec<String>>,
    },
    /// Train a classifier, optionally after a cross-validated grid search.
    Train {
        #[command(flatten)]
        model: ModelArgs,
        /// Dataset directory (default: <workdir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Search the hyper-parameter grid before the final fit.
        #[arg(long)]
        grid: bool,
        /// Cross-validation folds.
        #[arg(long)]
        k: Option<usize>,
        /// Model output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid search table output path.
        #[arg(long)]
        cv_out: Option<PathBuf>,
    },
    /// Cross-validate a classifier, or score a saved model on a dataset.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        /// Dataset directory (default: <workdir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Score this saved model instead of cross-validating.
        #[arg(long = "model")]
        model_file: Option<PathBuf>,
        /// Cross-validation folds.
        #[arg(long)]
        k: Option<usize>,
        /// Use contiguous time blocks instead of stratified folds.
        #[arg(long)]
        chronological: bool,
        /// JSON report output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank correlation and tree importance per feature set.
    Correlate {
        /// Dataset directory (default: <workdir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict whether merging REF2 into REF1 would conflict.
    Predict {
        #[arg(long, default_value = ".")]
        repo: PathBuf,
        ref1: String,
        ref2: String,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory of `<language>.model.json` files, used with --language.
        #[arg(long)]
        models_dir: Option<PathBuf>,
    },
    /// Compare all classifiers on identical folds.
    Report {
        /// Dataset directory (default: <workdir>/dataset).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Cross-validation folds.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// dt, rf, baseline1 or baseline2.
    #[arg(long, default_value = "rf")]
    classifier: String,
    /// Minimum samples per leaf.
    #[arg(long)]
    leaf: Option<usize>,
    /// Minimum samples to split a node.
    #[arg(long)]
    split: Option<usize>,
    /// Maximum tree depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Trees in the forest.
    #[arg(long)]
    estimators: Option<usize>,
}

impl ModelArgs {
    fn classifier(&self) -> Result<Classifier> {
        Ok(self.classifier.parse()?)
    }

    fn hyperparams(&self, base: HyperParams, seed: u64) -> HyperParams {
        HyperParams {
            min_samples_leaf: self.leaf.unwrap_or(base.min_samples_leaf),
            min_samples_split: self.split.unwrap_or(base.min_samples_split),
            max_depth: self.depth.unwrap_or(base.max_depth),
            n_estimators: self.estimators.unwrap_or(base.n_estimators),
            ..base
        }
        .with_seed(seed)
    }
}

/// Flags merged over the config file.
struct Settings {
    config: RunConfig,
    seed: u64,
    workdir: PathBuf,
    language: Option<String>,
    operator: Operator,
    jobs: usize,
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Settings> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(op) = &cli.operator {
            config.operator = Some(op.clone());
        }
        let jobs = cli
            .jobs
            .or(config.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        Ok(Settings {
            seed: cli.seed.or(config.seed).unwrap_or(0),
            workdir: cli
                .workdir
                .clone()
                .or_else(|| config.workdir.clone())
                .unwrap_or_else(|| PathBuf::from("premerge-work")),
            language: cli.language.clone().or_else(|| config.language.clone()),
            operator: config.operator()?,
            jobs: jobs.max(1),
            config,
        })
    }

    fn dataset(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone()
            .or_else(|| self.config.dataset.clone())
            .unwrap_or_else(|| self.workdir.join("dataset"))
    }

    fn k(&self, flag: Option<usize>) -> usize {
        flag.unwrap_or_else(|| self.config.k())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_mine(s: &Settings, catalog: &Option<PathBuf>, dataset: &Option<PathBuf>, limit: Option<usize>) -> Result<u8> {
    let catalog = catalog
        .clone()
        .or_else(|| s.config.catalog.clone())
        .context("no catalog given (--catalog or `catalog` in the config)")?;
    let opts = MineOptions {
        workdir: s.workdir.clone(),
        catalog,
        dataset: s.dataset(dataset),
        merge_limit: limit.unwrap_or_else(|| s.config.merge_limit()),
        operator: s.operator,
        jobs: s.jobs,
        size_cap: s.config.size_cap_bytes.unwrap_or(DEFAULT_SIZE_CAP),
        language: s.language.clone(),
    };
    let out = pipeline::mine(&opts)?;
    for r in &out.meta.repos {
        let m = &r.summary;
        println!(
            "{:<30} {:<12} merges {:>5}  conflicts {:>4}  clean {:>5}  octopus {:>3}  no-base {:>3}  replay errors {:>3}  {}",
            r.repo, r.status, m.merges_found, m.conflicts, m.cleans, m.octopus_skipped, m.no_base_skipped, m.replay_errors, r.detail
        );
    }
    let m = out.meta.summary;
    println!(
        "total: {} merges, {} conflicts, {} clean, {} new records, {} records in {}",
        m.merges_found,
        m.conflicts,
        m.cleans,
        out.records_written,
        out.records_total,
        opts.dataset.display()
    );
    if out.records_total == 0 {
        eprintln!("error: no records were written");
        return Ok(EXIT_ERROR);
    }
    Ok(0)
}

#[derive(Serialize)]
struct ExtractOutput {
    operator: Operator,
    names: Vec<String>,
    values: Vec<f64>,
}

fn cmd_extract(s: &Settings, repo: &Path, merge: &Option<String>, refs: &Option<Vec<String>>) -> Result<u8> {
    let fv = match (merge, refs) {
        (Some(m), _) => pipeline::extract_merge(repo, m, s.operator)?,
        (None, Some(r)) => pipeline::extract_refs(repo, &r[0], &r[1], s.operator)?.0,
        (None, None) => bail!("give --merge REV or --refs REF1 REF2"),
    };
    let out = ExtractOutput {
        operator: s.operator,
        names: feature_names(s.operator),
        values: fv.values(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn default_model_path(s: &Settings, classifier: Classifier) -> PathBuf {
    let dir = s.workdir.join("models");
    match &s.language {
        Some(l) => dir.join(format!("{}.{}.model.json", classifier.short_name(), l.to_ascii_lowercase())),
        None => dir.join(format!("{}.model.json", classifier.short_name())),
    }
}

fn cmd_train(
    s: &Settings,
    model: &ModelArgs,
    dataset: &Option<PathBuf>,
    grid: bool,
    k: Option<usize>,
    out: &Option<PathBuf>,
    cv_out: &Option<PathBuf>,
) -> Result<u8> {
    let classifier = model.classifier()?;
    let (ds, data) = pipeline::load_training(&s.dataset(dataset), s.language.as_deref())?;
    let opts = TrainOptions {
        classifier,
        hyperparams: model.hyperparams(s.config.hyperparams(), s.seed),
        grid: grid.then(|| s.config.grid()),
        k: s.k(k),
        seed: s.seed,
        language: s.language.clone(),
    };
    let trained = pipeline::train(&ds, &data, &opts)?;
    let path = out.clone().unwrap_or_else(|| default_model_path(s, classifier));
    trained.model.save(&path)?;
    if let Some(g) = &trained.grid {
        let cv_path = cv_out.clone().unwrap_or_else(|| path.with_extension("cv.json"));
        write_json(&cv_path, g)?;
        println!("grid search over {} cells ({}-fold, {}) -> {}", g.table.len(), g.k, g.objective, cv_path.display());
    }
    println!("{} on {} records -> {}", trained.model.spec().describe(), ds.len(), path.display());
    Ok(0)
}

fn cmd_evaluate(
    s: &Settings,
    model: &ModelArgs,
    dataset: &Option<PathBuf>,
    model_file: &Option<PathBuf>,
    k: Option<usize>,
    chronological: bool,
    out: &Option<PathBuf>,
) -> Result<u8> {
    let (ds, data) = pipeline::load_training(&s.dataset(dataset), s.language.as_deref())?;
    let report = match model_file {
        Some(path) => pipeline::evaluate_model(&ds, &data, &ModelFile::load(path)?, s.seed)?,
        None => {
            let spec = ModelSpec::new(model.classifier()?, model.hyperparams(s.config.hyperparams(), s.seed));
            if chronological {
                let folds = chronological_folds(&ds.timestamps(), s.k(k))?;
                let mut r = evaluator::cross_validate_with(&spec, &data, &folds, s.seed, FoldStrategy::Chronological)?;
                r.dataset = ds.fingerprint();
                r
            } else {
                pipeline::evaluate_cv(&ds, &data, &spec, s.k(k), s.seed)?
            }
        }
    };
    print!("{}", format_table(std::slice::from_ref(&report)));
    if report.zero_division() {
        eprintln!("warning: a precision or recall denominator was zero and reported as 0");
    }
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(0)
}

fn cmd_correlate(s: &Settings, dataset: &Option<PathBuf>, model: &ModelArgs, out: &Option<PathBuf>) -> Result<u8> {
    let (ds, data) = pipeline::load_training(&s.dataset(dataset), s.language.as_deref())?;
    let hp = model.hyperparams(s.config.hyperparams(), s.seed);
    let report = pipeline::correlate(&ds, &data, &hp, s.language.clone())?;
    print!("{}", report.to_text());
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    Ok(0)
}

fn cmd_predict(s: &Settings, repo: &Path, ref1: &str, ref2: &str, model: &Option<PathBuf>, models_dir: &Option<PathBuf>) -> Result<u8> {
    let path = match (model, models_dir, &s.language) {
        (Some(p), _, _) => p.clone(),
        (None, Some(dir), Some(lang)) => pipeline::model_for_language(dir, lang),
        (None, Some(_), None) => bail!("--models-dir needs --language to pick a model"),
        (None, None, _) => bail!("give --model FILE or --models-dir DIR with --language"),
    };
    let model = ModelFile::load(&path)?;
    let verdict = pipeline::predict(repo, ref1, ref2, &model, s.seed)?;
    println!("{}", serde_json::to_string(&verdict)?);
    Ok(match verdict.verdict {
        Verdict::Safe => 0,
        Verdict::Conflict => EXIT_CONFLICT,
    })
}

fn cmd_report(s: &Settings, dataset: &Option<PathBuf>, model: &ModelArgs, k: Option<usize>, out: &Option<PathBuf>) -> Result<u8> {
    let (ds, data) = pipeline::load_training(&s.dataset(dataset), s.language.as_deref())?;
    let hp = model.hyperparams(s.config.hyperparams(), s.seed);
    let reports = pipeline::compare_classifiers(&ds, &data, &hp, s.k(k), s.seed)?;
    println!(
        "{} records ({} conflicts, imbalance {:.2}%), {}-fold, seed {}",
        ds.len(),
        ds.class_counts.conflicts,
        ds.imbalance_rate().unwrap_or(0.0) * 100.0,
        s.k(k),
        s.seed
    );
    print!("{}", format_table(&reports));
    if let Some(path) = out {
        write_json(path, &reports)?;
    }
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    let s = Settings::resolve(cli)?;
    match &cli.command {
        Command::Mine { catalog, dataset, limit } => cmd_mine(&s, catalog, dataset, *limit),
        Command::Extract { repo, merge, refs } => cmd_extract(&s, repo, merge, refs),
        Command::Train {
            model,
            dataset,
            grid,
            k,
            out,
            cv_out,
        } => cmd_train(&s, model, dataset, *grid, *k, out, cv_out),
        Command::Evaluate {
            model,
            dataset,
            model_file,
            k,
            chronological,
            out,
        } => cmd_evaluate(&s, model, dataset, model_file, *k, *chronological, out),
        Command::Correlate { dataset, model, out } => cmd_correlate(&s, dataset, model, out),
        Command::Predict {
            repo,
            ref1,
            ref2,
            model,
            models_dir,
        } => cmd_predict(&s, repo, ref1, ref2, model, models_dir),
        Command::Report { dataset, model, k, out } => cmd_report(&s, dataset, model, *k, out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>() {
        Some(PipelineError::Environment(_)) => EXIT_ENVIRONMENT,
        Some(PipelineError::UnrelatedRefs(..)) => EXIT_UNRELATED,
        _ => EXIT_ERROR,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
