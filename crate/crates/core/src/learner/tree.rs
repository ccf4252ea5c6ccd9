use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

/// CART regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: TreeNode,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => walk(left) + walk(right),
            }
        }
        walk(&self.root)
    }
}

/// Fit a regression tree to one target column by greedy variance reduction.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Equal gains keep the lower feature index, then the lower threshold.
pub fn fit_tree(features: &[Vec<f64>], target: &[f64], config: &TrainConfig) -> Result<RegressionTree> {
    if features.is_empty() {
        return Err(Error::EmptyDataset("cannot fit a tree to zero rows".into()));
    }
    if features.len() != target.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} targets",
            features.len(),
            target.len()
        )));
    }
    let min_leaf = config.min_samples_leaf.max(1);
    let mut rows: Vec<usize> = (0..features.len()).collect();
    let root = grow(features, target, &mut rows, 0, config.max_depth, min_leaf);
    Ok(RegressionTree { root })
}

fn grow(
    features: &[Vec<f64>],
    target: &[f64],
    rows: &mut [usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
) -> TreeNode {
    let n = rows.len();
    let sum: f64 = rows.iter().map(|&i| target[i]).sum();
    let mean = sum / n as f64;
    let first = target[rows[0]];
    let constant = rows.iter().all(|&i| target[i] == first);
    if depth >= max_depth || n < 2 * min_leaf || constant {
        return TreeNode::Leaf { value: mean };
    }

    let n_features = features[0].len();
    let parent_score = sum * sum / n as f64;
    // (gain, feature, threshold)
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = rows.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| features[a][f].total_cmp(&features[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for i in 1..n {
            left_sum += target[order[i - 1]];
            let lo = features[order[i - 1]][f];
            let hi = features[order[i]][f];
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let right_sum = sum - left_sum;
            let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64;
            let gain = score - parent_score;
            if gain > 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((gain, f, threshold));
            }
        }
    }

    let Some((_, feature, threshold)) = best else {
        return TreeNode::Leaf { value: mean };
    };
    let split = partition(rows, |i| features[i][feature] <= threshold);
    let (left_rows, right_rows) = rows.split_at_mut(split);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(grow(features, target, left_rows, depth + 1, max_depth, min_leaf)),
        right: Box::new(grow(features, target, right_rows, depth + 1, max_depth, min_leaf)),
    }
}

/// Stable in-place partition; returns the number of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| pred(i));
    let k = left.len();
    rows[..k].copy_from_slice(&left);
    rows[k..].copy_from_slice(&right);
    k
}
