//! Per-class precision/recall/f1 and stratified k-fold cross-validation.
//!
//! Both classes are scored as the target class in turn. Reports carry no
//! accuracy figure: on imbalanced data it mostly measures the class prior.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{derive_seed, LearnerError, Model, ModelSpec, TrainingData};
use crate::Label;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("cannot build folds: {0}")]
    Fold(String),
    #[error(transparent)]
    Learner(Box<LearnerError>),
}

impl From<LearnerError> for EvalError {
    fn from(e: LearnerError) -> Self {
        EvalError::Learner(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions seen with the other class as target.
    pub fn flipped(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    fn add(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// Confusion counts with `target` as the positive class.
pub fn confusion(truth: &[Label], pred: &[Label], target: Label) -> Result<ConfusionCounts, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Input(format!(
            "{} truth labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(EvalError::Input("no labels to evaluate".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == target, p == target) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// A zero denominator occurred and the affected metric was set to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_division: bool,
}

pub fn prf(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let (p, r) = (precision.unwrap_or(0.0), recall.unwrap_or(0.0));
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Prf {
        precision: p,
        recall: r,
        f1,
        zero_division: precision.is_none() || recall.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub safe: Prf,
    pub conflict: Prf,
}

impl ClassMetrics {
    pub fn from_conflict_counts(c: &ConfusionCounts) -> ClassMetrics {
        ClassMetrics {
            conflict: prf(c),
            safe: prf(&c.flipped()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldStrategy {
    #[default]
    Stratified,
    /// Contiguous blocks in merge-time order.
    Chronological,
}

/// Splits indices into `k` folds with per-class counts as even as possible.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::Fold(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [Label::Conflict, Label::Clean] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(EvalError::Fold(format!(
                "class {class} has {} samples, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// `k` contiguous blocks after ordering by timestamp (ties by index).
pub fn chronological_folds(timestamps: &[i64], k: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 || timestamps.len() < k {
        return Err(EvalError::Fold(format!(
            "need k >= 2 and at least k samples (k = {k}, n = {})",
            timestamps.len()
        )));
    }
    let mut order: Vec<usize> = (0..timestamps.len()).collect();
    order.sort_by_key(|&i| (timestamps[i], i));
    let n = order.len();
    Ok((0..k)
        .map(|f| {
            let mut fold = order[f * n / k..(f + 1) * n / k].to_vec();
            fold.sort_unstable();
            fold
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: ClassMetrics,
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub dataset: String,
    pub n_samples: usize,
    pub k: usize,
    pub seed: u64,
    pub strategy: FoldStrategy,
    /// Metrics over predictions pooled across folds (headline numbers).
    pub pooled: ClassMetrics,
    /// Pooled counts with Conflict as the target class.
    pub pooled_confusion: ConfusionCounts,
    pub fold_mean: ClassMetrics,
    pub fold_sd: ClassMetrics,
    pub folds: Vec<FoldReport>,
}

impl EvaluationReport {
    pub fn zero_division(&self) -> bool {
        self.pooled.safe.zero_division || self.pooled.conflict.zero_division
    }
}

fn predict_all(model: &Model, data: &TrainingData, rows: &[usize], seed: u64) -> Result<Vec<Label>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.iter()
        .map(|&i| Ok(model.predict(&data.rows()[i], &mut rng)?.label))
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(folds: &[FoldReport], pick: impl Fn(&ClassMetrics) -> ClassMetrics) -> (ClassMetrics, ClassMetrics) {
    let ms: Vec<ClassMetrics> = folds.iter().map(|f| pick(&f.metrics)).collect();
    let stat = |get: &dyn Fn(&ClassMetrics) -> f64| mean_sd(&ms.iter().map(get).collect::<Vec<_>>());
    let block = |get_prf: &dyn Fn(&ClassMetrics) -> Prf| {
        let (pm, ps) = stat(&|m| get_prf(m).precision);
        let (rm, rs) = stat(&|m| get_prf(m).recall);
        let (fm, fs) = stat(&|m| get_prf(m).f1);
        (
            Prf { precision: pm, recall: rm, f1: fm, zero_division: false },
            Prf { precision: ps, recall: rs, f1: fs, zero_division: false },
        )
    };
    let (safe_mean, safe_sd) = block(&|m| m.safe);
    let (conf_mean, conf_sd) = block(&|m| m.conflict);
    (
        ClassMetrics { safe: safe_mean, conflict: conf_mean },
        ClassMetrics { safe: safe_sd, conflict: conf_sd },
    )
}

/// Trains on all-but-one fold and predicts the held-out fold, for every fold.
pub fn cross_validate_folds(
    spec: &ModelSpec,
    data: &TrainingData,
    folds: &[Vec<usize>],
    seed: u64,
) -> Result<(ConfusionCounts, Vec<FoldReport>), EvalError> {
    let n = data.len();
    let results: Vec<Result<FoldReport, EvalError>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let model = spec.fit(&data.subset(&train))?;
            let pred = predict_all(&model, data, test, derive_seed(seed, f as u64))?;
            let truth: Vec<Label> = test.iter().map(|&i| data.label(i)).collect();
            let c = confusion(&truth, &pred, Label::Conflict)?;
            Ok(FoldReport {
                fold: f,
                n_test: test.len(),
                metrics: ClassMetrics::from_conflict_counts(&c),
                confusion: c,
            })
        })
        .collect();
    let folds: Vec<FoldReport> = results.into_iter().collect::<Result<_, _>>()?;
    let mut pooled = ConfusionCounts::default();
    folds.iter().for_each(|f| pooled.add(&f.confusion));
    Ok((pooled, folds))
}

pub fn cross_validate(spec: &ModelSpec, data: &TrainingData, k: usize, seed: u64) -> Result<EvaluationReport, EvalError> {
    let folds = stratified_folds(data.labels(), k, seed)?;
    cross_validate_with(spec, data, &folds, seed, FoldStrategy::Stratified)
}

pub fn cross_validate_with(
    spec: &ModelSpec,
    data: &TrainingData,
    folds: &[Vec<usize>],
    seed: u64,
    strategy: FoldStrategy,
) -> Result<EvaluationReport, EvalError> {
    let (pooled_confusion, fold_reports) = cross_validate_folds(spec, data, folds, seed)?;
    let (fold_mean, fold_sd) = summarize(&fold_reports, |m| *m);
    Ok(EvaluationReport {
        model: spec.describe(),
        dataset: String::new(),
        n_samples: data.len(),
        k: folds.len(),
        seed,
        strategy,
        pooled: ClassMetrics::from_conflict_counts(&pooled_confusion),
        pooled_confusion,
        fold_mean,
        fold_sd,
        folds: fold_reports,
    })
}

/// Scores an already trained model on `data` (no refitting).
pub fn evaluate_holdout(model: &Model, name: &str, data: &TrainingData, seed: u64) -> Result<EvaluationReport, EvalError> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let pred = predict_all(model, data, &rows, seed)?;
    let c = confusion(data.labels(), &pred, Label::Conflict)?;
    let metrics = ClassMetrics::from_conflict_counts(&c);
    Ok(EvaluationReport {
        model: name.to_string(),
        dataset: String::new(),
        n_samples: data.len(),
        k: 1,
        seed,
        strategy: FoldStrategy::Stratified,
        pooled: metrics,
        pooled_confusion: c,
        fold_mean: metrics,
        fold_sd: ClassMetrics::default(),
        folds: vec![FoldReport {
            fold: 0,
            n_test: data.len(),
            metrics,
            confusion: c,
        }],
    })
}

/// Aligned text table: one row per report, Safe and Conflicting blocks.
pub fn format_table(reports: &[EvaluationReport]) -> String {
    let name_w = reports.iter().map(|r| r.model.len()).max().unwrap_or(10).max(10);
    let mut out = format!(
        "{:name_w$}  {:^26}  {:^26}\n{:name_w$}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}\n",
        "Classifier", "Safe", "Conflicting", "", "prec", "recall", "f1", "prec", "recall", "f1"
    );
    for r in reports {
        let (s, c) = (r.pooled.safe, r.pooled.conflict);
        out.push_str(&format!(
            "{:name_w$}  {:>8.4} {:>8.4} {:>8.4}  {:>8.4} {:>8.4} {:>8.4}\n",
            r.model, s.precision, s.recall, s.f1, c.precision, c.recall, c.f1
        ));
    }
    out
}
