//! Slow reference implementations written independently of the library.

use num_rational::Ratio;

type Q = Ratio<i128>;

/// Node of the reference tree, in preorder (node, left subtree, right subtree).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleNode {
    pub conflicts: u64,
    pub cleans: u64,
    pub depth: usize,
    /// (feature, threshold)
    pub split: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: usize,
}

fn gini(conflicts: i128, cleans: i128) -> Q {
    let n = conflicts + cleans;
    Q::from_integer(1) - Q::new(conflicts * conflicts + cleans * cleans, n * n)
}

fn counts(rows: &[usize], labels: &[bool]) -> (i128, i128) {
    let c = rows.iter().filter(|&&i| labels[i]).count() as i128;
    (c, rows.len() as i128 - c)
}

/// Exhaustive CART: every feature, every midpoint between distinct sorted
/// values, children weighted Gini in exact rationals. A split is taken only
/// if it lowers impurity; ties keep the earliest (feature, threshold).
/// `labels[i]` is true for the conflict class.
pub fn cart(x: &[Vec<f64>], labels: &[bool], p: OracleParams) -> Vec<OracleNode> {
    let mut out = Vec::new();
    grow(x, labels, (0..x.len()).collect(), 0, p, &mut out);
    out
}

fn grow(x: &[Vec<f64>], labels: &[bool], rows: Vec<usize>, depth: usize, p: OracleParams, out: &mut Vec<OracleNode>) {
    let (c, s) = counts(&rows, labels);
    let id = out.len();
    out.push(OracleNode {
        conflicts: c as u64,
        cleans: s as u64,
        depth,
        split: None,
    });
    if depth >= p.max_depth || rows.len() < p.min_samples_split || c == 0 || s == 0 {
        return;
    }
    let n = rows.len() as i128;
    let parent = gini(c, s);
    let mut best: Option<(Q, usize, f64)> = None;
    let d = x.first().map_or(0, Vec::len);
    #[allow(clippy::needless_range_loop)]
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] <= t).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] > t).collect();
            if left.len() < p.min_samples_leaf || right.len() < p.min_samples_leaf {
                continue;
            }
            let (lc, ls) = counts(&left, labels);
            let (rc, rs) = counts(&right, labels);
            let impurity = Q::new(left.len() as i128, n) * gini(lc, ls) + Q::new(right.len() as i128, n) * gini(rc, rs);
            if impurity >= parent {
                continue;
            }
            if best.as_ref().is_none_or(|(b, _, _)| impurity < *b) {
                best = Some((impurity, f, t));
            }
        }
    }
    if let Some((_, f, t)) = best {
        out[id].split = Some((f, t));
        let left: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] <= t).collect();
        let right: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f] > t).collect();
        grow(x, labels, left, depth + 1, p, out);
        grow(x, labels, right, depth + 1, p, out);
    }
}

/// Prediction of a reference tree (majority, ties to clean). True = conflict.
pub fn cart_predict(tree: &[OracleNode], row: &[f64]) -> bool {
    fn walk(tree: &[OracleNode], at: usize, row: &[f64]) -> (usize, bool) {
        let node = &tree[at];
        match node.split {
            None => (at + 1, node.conflicts > node.cleans),
            Some((f, t)) => {
                let (after_left, left_pred) = walk(tree, at + 1, row);
                let (after_right, right_pred) = walk(tree, after_left, row);
                (after_right, if row[f] <= t { left_pred } else { right_pred })
            }
        }
    }
    walk(tree, 0, row).1
}

/// Rank of each value: 1 + values below + half the other equal values.
pub fn brute_force_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Spearman's rho as the raw-sum Pearson formula applied to brute-force ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_force_ranks(x), brute_force_ranks(y));
    let n = x.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Reduced fraction as (numerator, denominator).
pub type Fraction = (i64, i64);

/// Exact (precision, recall) of the positive class; `None` on a zero
/// denominator.
pub fn precision_recall(truth: &[bool], pred: &[bool]) -> (Option<Fraction>, Option<Fraction>) {
    let tp = truth.iter().zip(pred).filter(|(&t, &p)| t && p).count() as i64;
    let predicted = pred.iter().filter(|&&p| p).count() as i64;
    let actual = truth.iter().filter(|&&t| t).count() as i64;
    let ratio = |num: i64, den: i64| {
        (den > 0).then(|| {
            let r = Ratio::new(num, den);
            (*r.numer(), *r.denom())
        })
    };
    (ratio(tp, predicted), ratio(tp, actual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(brute_force_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn stump_on_separable_data() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let y = [false, false, true, true];
        let t = cart(
            &x,
            &y,
            OracleParams {
                min_samples_leaf: 1,
                min_samples_split: 2,
                max_depth: 3,
            },
        );
        assert_eq!(t[0].split, Some((0, 2.5)));
        assert_eq!(t.len(), 3);
        assert!(cart_predict(&t, &[3.5]));
    }

    #[test]
    fn worked_precision_recall() {
        let truth = [true, false, false, true, false, false];
        let pred = [false, false, true, true, false, true];
        assert_eq!(precision_recall(&truth, &pred), (Some((1, 3)), Some((1, 2))));
    }
}
