//! Rank correlation between feature sets and conflict labels, and per-set
//! decision-tree importance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::features::feature_sets_for_dimension;
use crate::learner::{LearnerError, TreeModel};
use crate::Label;

pub const SIGNIFICANCE: f64 = 0.05;
/// Largest sample size for which exact permutation p-values are offered.
pub const EXACT_P_MAX_N: usize = 9;
pub const FEATURE_SETS: u8 = 9;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// 1-based fractional ranks; ties share the mean of their positions.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::DegenerateInput(format!(
            "lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(AnalyticsError::DegenerateInput(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(AnalyticsError::DegenerateInput("NaN value".into()));
    }
    if is_constant(x) || is_constant(y) {
        return Err(AnalyticsError::DegenerateInput("constant input".into()));
    }
    Ok(())
}

/// Two-sided p-value for `rho` over `n` pairs via the t approximation.
pub fn t_approx_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Spearman's rho with a two-sided t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), AnalyticsError> {
    check_pair(x, y)?;
    let rho = pearson(&rank_with_ties(x), &rank_with_ties(y));
    Ok((rho, t_approx_p(rho, x.len())))
}

/// Exact two-sided permutation p-value of Spearman's rho, for n <= 9.
pub fn exact_permutation_p(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_pair(x, y)?;
    if x.len() > EXACT_P_MAX_N {
        return Err(AnalyticsError::DegenerateInput(format!(
            "exact p-values are limited to n <= {EXACT_P_MAX_N}"
        )));
    }
    let rx = rank_with_ties(x);
    let mut ry = rank_with_ties(y);
    let observed = pearson(&rx, &ry).abs() - 1e-12;
    // Heap's algorithm over all orderings of ry
    let n = ry.len();
    let mut c = vec![0usize; n];
    let (mut hits, mut total) = (0u64, 0u64);
    let mut tally = |ry: &[f64]| {
        total += 1;
        if pearson(&rx, ry).abs() >= observed {
            hits += 1;
        }
    };
    tally(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            tally(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    Strong,
    Medium,
    Weak,
    Negligible,
    Insignificant,
}

impl Strength {
    pub fn classify(coefficient: f64, p_value: f64) -> Strength {
        if p_value.is_nan() || p_value >= SIGNIFICANCE {
            return Strength::Insignificant;
        }
        match coefficient.abs() {
            a if a >= 0.6 => Strength::Strong,
            a if a >= 0.4 => Strength::Medium,
            a if a >= 0.2 => Strength::Weak,
            _ => Strength::Negligible,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strength::Strong => "strong",
            Strength::Medium => "medium",
            Strength::Weak => "weak",
            Strength::Negligible => "negligible",
            Strength::Insignificant => "insignificant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub feature_set: u8,
    pub coefficient: f64,
    pub p_value: f64,
    pub strength: Strength,
    /// Non-constant member features that entered the average.
    pub members_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature_set: u8,
    pub importance: f64,
}

fn set_columns(dimension: usize) -> Result<Vec<u8>, AnalyticsError> {
    feature_sets_for_dimension(dimension).ok_or_else(|| {
        AnalyticsError::DegenerateInput(format!("no feature-set layout for dimension {dimension}"))
    })
}

/// One entry per feature set. Multi-feature sets average rho and p over
/// their non-constant members; Conflict is encoded as 1 and Clean as 0.
pub fn correlation_report(dataset: &LabeledDataset) -> Result<Vec<CorrelationEntry>, AnalyticsError> {
    let rows = dataset.rows();
    let labels = dataset.labels();
    correlation_report_rows(&rows, &labels)
}

pub fn correlation_report_rows(rows: &[Vec<f64>], labels: &[Label]) -> Result<Vec<CorrelationEntry>, AnalyticsError> {
    let conflicts = labels.iter().filter(|l| l.is_conflict()).count();
    if conflicts < 3 || labels.len() - conflicts < 3 {
        return Err(AnalyticsError::DegenerateInput(format!(
            "need at least 3 records per class, got {conflicts} conflicts and {} cleans",
            labels.len() - conflicts
        )));
    }
    let dimension = rows.first().map_or(0, Vec::len);
    let sets = set_columns(dimension)?;
    let y: Vec<f64> = labels.iter().map(|l| if l.is_conflict() { 1.0 } else { 0.0 }).collect();
    let mut entries = Vec::new();
    for set in 1..=FEATURE_SETS {
        let (mut rho_sum, mut p_sum, mut used) = (0.0, 0.0, 0usize);
        for (col, _) in sets.iter().enumerate().filter(|(_, &s)| s == set) {
            let x: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            if is_constant(&x) {
                continue;
            }
            let (rho, p) = spearman(&x, &y)?;
            rho_sum += rho;
            p_sum += p;
            used += 1;
        }
        let (coefficient, p_value) = if used == 0 {
            (0.0, 1.0)
        } else {
            (rho_sum / used as f64, p_sum / used as f64)
        };
        entries.push(CorrelationEntry {
            feature_set: set,
            coefficient,
            p_value,
            strength: Strength::classify(coefficient, p_value),
            members_used: used,
        });
    }
    Ok(entries)
}

/// Per-set mean of the tree's normalised Gini importances.
pub fn feature_importance(tree: &TreeModel) -> Result<Vec<ImportanceEntry>, AnalyticsError> {
    let per_feature = tree.feature_importances()?;
    let sets = set_columns(per_feature.len())?;
    Ok((1..=FEATURE_SETS)
        .map(|set| {
            let members: Vec<f64> = sets
                .iter()
                .zip(&per_feature)
                .filter(|(&s, _)| s == set)
                .map(|(_, &v)| v)
                .collect();
            ImportanceEntry {
                feature_set: set,
                importance: members.iter().sum::<f64>() / members.len() as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub language: Option<String>,
    pub n_samples: usize,
    /// How one coefficient per multi-feature set is obtained.
    pub set_aggregation: String,
    pub correlations: Vec<CorrelationEntry>,
    pub importances: Vec<ImportanceEntry>,
}

impl AnalyticsReport {
    pub fn new(
        language: Option<String>,
        n_samples: usize,
        correlations: Vec<CorrelationEntry>,
        importances: Vec<ImportanceEntry>,
    ) -> Self {
        AnalyticsReport {
            language,
            n_samples,
            set_aggregation: "mean of member-feature rho and p; constant members skipped".into(),
            correlations,
            importances,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "Feature set analysis ({}, n = {})\n{:>4}  {:>8}  {:>10}  {:<13}  {:>10}\n",
            self.language.as_deref().unwrap_or("all languages"),
            self.n_samples,
            "FS",
            "CC",
            "p-value",
            "strength",
            "importance"
        );
        for c in &self.correlations {
            let imp = self
                .importances
                .iter()
                .find(|i| i.feature_set == c.feature_set)
                .map_or("-".to_string(), |i| format!("{:.4}", i.importance));
            out.push_str(&format!(
                "{:>4}  {:>8.4}  {:>10.3e}  {:<13}  {:>10}\n",
                c.feature_set,
                c.coefficient,
                c.p_value,
                c.strength.as_str(),
                imp
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        assert_eq!(rank_with_ties(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_with_ties(&[1.0, 1.0]), vec![1.5, 1.5]);
        assert_eq!(rank_with_ties(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn perfect_monotone() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let (rho, p) = spearman(&x, &x).unwrap();
        assert_eq!(rho, 1.0);
        assert!(p < 1e-6);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap().0, -1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(AnalyticsError::DegenerateInput(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn strength_thresholds() {
        assert_eq!(Strength::classify(0.6, 0.01), Strength::Strong);
        assert_eq!(Strength::classify(-0.45, 0.01), Strength::Medium);
        assert_eq!(Strength::classify(0.39, 0.01), Strength::Weak);
        assert_eq!(Strength::classify(0.1, 0.01), Strength::Negligible);
        assert_eq!(Strength::classify(0.9, 0.05), Strength::Insignificant);
    }

    #[test]
    fn exact_p_for_perfect_rank_agreement() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        // only the identity and its reverse reach |rho| = 1
        assert!((exact_permutation_p(&x, &x).unwrap() - 2.0 / 120.0).abs() < 1e-12);
    }

    #[test]
    fn t_approx_is_symmetric_in_sign() {
        assert_eq!(t_approx_p(0.3, 40), t_approx_p(-0.3, 40));
        assert!((t_approx_p(0.0, 40) - 1.0).abs() < 1e-12);
    }
}
