//! CART with Gini impurity and midpoint thresholds.
//!
//! Candidate splits are compared exactly: with integer (weighted) class counts
//! the weighted child impurity of a split is `N - Σ q_c / n_c` where `q_c` is
//! the sum of squared class counts of child `c`, so maximising
//! `q_l / n_l + q_r / n_r` is a comparison of two fractions and can be done
//! with integer cross-multiplication. Ties therefore resolve by the documented
//! order (lower feature index, then lower threshold) regardless of rounding.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HyperParams, LearnerError, TrainingData};
use crate::Label;

/// Gini impurity `1 - Σ p²` of a two-class node; 0 for an empty node.
pub fn gini(counts: (u64, u64)) -> f64 {
    let (a, b) = counts;
    let n = a + b;
    if n == 0 {
        return 0.0;
    }
    let (pa, pb) = (a as f64 / n as f64, b as f64 / n as f64);
    1.0 - (pa * pa + pb * pb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassTally {
    pub conflicts: u64,
    pub cleans: u64,
}

impl ClassTally {
    fn add(&mut self, label: Label) {
        match label {
            Label::Conflict => self.conflicts += 1,
            Label::Clean => self.cleans += 1,
        }
    }

    fn sub(&mut self, label: Label) {
        match label {
            Label::Conflict => self.conflicts -= 1,
            Label::Clean => self.cleans -= 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.conflicts + self.cleans
    }

    fn weighted(&self, w: u32) -> (u128, u128) {
        (self.conflicts as u128 * w as u128, self.cleans as u128)
    }

    /// Majority class; ties go to Clean.
    pub fn majority(&self, conflict_weight: u32) -> Label {
        let (c, s) = self.weighted(conflict_weight);
        if c > s {
            Label::Conflict
        } else {
            Label::Clean
        }
    }

    fn is_pure(&self) -> bool {
        self.conflicts == 0 || self.cleans == 0
    }
}

/// `Σ counts²` and `Σ counts` of a weighted tally.
fn moments(t: &ClassTally, w: u32) -> (u128, u128) {
    let (c, s) = t.weighted(w);
    (c * c + s * s, c + s)
}

/// Exact score `q_l/n_l + q_r/n_r` as a fraction (numerator, denominator).
fn split_score(left: &ClassTally, right: &ClassTally, w: u32) -> (u128, u128) {
    let (ql, nl) = moments(left, w);
    let (qr, nr) = moments(right, w);
    (ql * nr + qr * nl, nl * nr)
}

fn cmp_fraction(a: (u128, u128), b: (u128, u128)) -> Ordering {
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Impurity decrease of a split, weighted by the node's share of samples.
fn gain_of(parent: &ClassTally, left: &ClassTally, right: &ClassTally, w: u32) -> f64 {
    let (qp, np) = moments(parent, w);
    let (num, den) = split_score(left, right, w);
    let n = np as f64;
    (num as f64 / den as f64 - qp as f64 / n) / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best admissible split of `samples` over `candidate_features`.
///
/// Returns `None` when fewer than `min_samples_split` samples are given or no
/// split with both children holding `min_samples_leaf` samples decreases
/// impurity.
pub fn best_split(
    data: &TrainingData,
    samples: &[usize],
    candidate_features: &[usize],
    hp: &HyperParams,
) -> Option<SplitCandidate> {
    if samples.len() < hp.min_samples_split.max(2) {
        return None;
    }
    let w = hp.conflict_weight;
    let mut parent = ClassTally::default();
    for &i in samples {
        parent.add(data.label(i));
    }
    if parent.is_pure() {
        return None;
    }
    let (qp, np) = moments(&parent, w);
    let parent_score = (qp, np);

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<(SplitCandidate, (u128, u128))> = None;
    let mut order: Vec<usize> = samples.to_vec();
    for &f in &features {
        order.sort_by(|&a, &b| data.value(a, f).total_cmp(&data.value(b, f)));
        let mut left = ClassTally::default();
        let mut right = parent;
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            left.add(data.label(i));
            right.sub(data.label(i));
            let (v, next) = (data.value(i, f), data.value(order[pos + 1], f));
            if v == next {
                continue;
            }
            let n_left = pos + 1;
            if n_left < hp.min_samples_leaf || order.len() - n_left < hp.min_samples_leaf {
                continue;
            }
            let score = split_score(&left, &right, w);
            // strictly better than leaving the node unsplit
            if cmp_fraction(score, parent_score) != Ordering::Greater {
                continue;
            }
            let better = match &best {
                None => true,
                Some((_, s)) => cmp_fraction(score, *s) == Ordering::Greater,
            };
            if better {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                let gain = gain_of(&parent, &left, &right, w);
                best = Some((SplitCandidate { feature: f, threshold, gain }, score));
            }
        }
    }
    best.map(|(c, _)| c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitNode {
    pub feature: usize,
    #[serde(with = "decimal")]
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training samples reaching this node (with bootstrap repeats).
    pub counts: ClassTally,
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitNode>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// Node 0 is the root; children always follow their parent.
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub hyperparams: HyperParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_mask: Option<Vec<usize>>,
}

impl TreeModel {
    pub fn leaf_for(&self, x: &[f64]) -> Result<&Node, LearnerError> {
        if x.len() != self.n_features {
            return Err(LearnerError::Schema {
                expected: self.n_features,
                found: x.len(),
            });
        }
        let mut node = self
            .nodes
            .first()
            .ok_or_else(|| LearnerError::ModelState("tree has no nodes".into()))?;
        while let Some(split) = &node.split {
            node = if x[split.feature] <= split.threshold {
                &self.nodes[split.left]
            } else {
                &self.nodes[split.right]
            };
        }
        Ok(node)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, LearnerError> {
        Ok(self.leaf_for(x)?.counts.majority(self.hyperparams.conflict_weight))
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn splits(&self) -> impl Iterator<Item = &SplitNode> {
        self.nodes.iter().filter_map(|n| n.split.as_ref())
    }

    /// Mean decrease in Gini impurity per feature, normalised to sum to 1.
    /// All zeros for a single-leaf tree.
    pub fn feature_importances(&self) -> Result<Vec<f64>, LearnerError> {
        let root = self
            .nodes
            .first()
            .ok_or_else(|| LearnerError::ModelState("tree has not been trained".into()))?;
        let w = self.hyperparams.conflict_weight;
        let total = root.counts.weighted(w);
        let total = (total.0 + total.1) as f64;
        let mut imp = vec![0.0; self.n_features];
        let weighted_impurity = |n: &Node| {
            let (c, s) = n.counts.weighted(w);
            ((c + s) as f64 / total) * gini((c as u64, s as u64))
        };
        for node in &self.nodes {
            if let Some(split) = &node.split {
                imp[split.feature] += weighted_impurity(node)
                    - weighted_impurity(&self.nodes[split.left])
                    - weighted_impurity(&self.nodes[split.right]);
            }
        }
        let sum: f64 = imp.iter().sum();
        if sum > 0.0 {
            imp.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(imp)
    }
}

pub(crate) struct Grower<'a, R> {
    pub data: &'a TrainingData,
    pub hp: &'a HyperParams,
    pub allowed: Vec<usize>,
    /// Features drawn per node; `allowed.len()` disables subsampling.
    pub per_node: usize,
    pub rng: R,
}

impl<R: Rng> Grower<'_, R> {
    pub fn grow(mut self, samples: Vec<usize>) -> Vec<Node> {
        let mut nodes = Vec::new();
        self.grow_node(samples, 0, &mut nodes);
        nodes
    }

    fn candidates(&mut self) -> Vec<usize> {
        if self.per_node >= self.allowed.len() {
            return self.allowed.clone();
        }
        let mut picked: Vec<usize> = sample(&mut self.rng, self.allowed.len(), self.per_node)
            .into_iter()
            .map(|i| self.allowed[i])
            .collect();
        picked.sort_unstable();
        picked
    }

    fn grow_node(&mut self, samples: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let mut counts = ClassTally::default();
        for &i in &samples {
            counts.add(self.data.label(i));
        }
        let id = nodes.len();
        nodes.push(Node {
            counts,
            depth,
            split: None,
        });
        if depth >= self.hp.max_depth || samples.len() < self.hp.min_samples_split || counts.is_pure() {
            return id;
        }
        let candidates = self.candidates();
        let Some(split) = best_split(self.data, &samples, &candidates, self.hp) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&i| self.data.value(i, split.feature) <= split.threshold);
        let l = self.grow_node(left, depth + 1, nodes);
        let r = self.grow_node(right, depth + 1, nodes);
        nodes[id].split = Some(SplitNode {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        });
        id
    }
}

/// Grows a tree on all rows; `feature_mask` restricts usable features.
pub fn fit_tree(
    data: &TrainingData,
    hp: &HyperParams,
    feature_mask: Option<&[usize]>,
) -> Result<TreeModel, LearnerError> {
    hp.validate()?;
    if data.is_empty() {
        return Err(LearnerError::Training("empty dataset".into()));
    }
    let allowed = allowed_features(data, feature_mask)?;
    let nodes = Grower {
        data,
        hp,
        per_node: allowed.len(),
        allowed,
        rng: rand::rngs::mock::StepRng::new(0, 0),
    }
    .grow((0..data.len()).collect());
    Ok(TreeModel {
        nodes,
        n_features: data.n_features(),
        hyperparams: *hp,
        feature_mask: feature_mask.map(|m| m.to_vec()),
    })
}

pub(crate) fn allowed_features(
    data: &TrainingData,
    feature_mask: Option<&[usize]>,
) -> Result<Vec<usize>, LearnerError> {
    match feature_mask {
        None => Ok((0..data.n_features()).collect()),
        Some(mask) => {
            if let Some(&bad) = mask.iter().find(|&&f| f >= data.n_features()) {
                return Err(LearnerError::Training(format!(
                    "feature mask index {bad} out of range for {} features",
                    data.n_features()
                )));
            }
            let mut m = mask.to_vec();
            m.sort_unstable();
            m.dedup();
            Ok(m)
        }
    }
}

/// Serialises an `f64` as its shortest round-trip decimal string.
pub(crate) mod decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
