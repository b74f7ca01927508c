//! Binary regression trees shared by the forest and boosting learners.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Tree node. Rows with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        cover: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Nodes stored in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_of(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Structural checks: children in range, every node reached once,
    /// finite thresholds and positive covers.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(Error::invalid(format!("tree node {i} out of range or shared")));
            }
            seen[i] = true;
            let node = &self.nodes[i];
            if !(node.cover() > 0.0) {
                return Err(Error::invalid(format!("tree node {i} has cover {}", node.cover())));
            }
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = node
            {
                if *feature >= n_features || !threshold.is_finite() {
                    return Err(Error::invalid(format!("tree node {i} has a bad split")));
                }
                stack.push(*left);
                stack.push(*right);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("tree has unreachable nodes"));
        }
        Ok(())
    }
}

/// Weighted sum of trees plus a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base: f64,
    pub trees: Vec<RegressionTree>,
    pub weights: Vec<f64>,
}

impl TreeEnsemble {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base
            + self
                .trees
                .iter()
                .zip(&self.weights)
                .map(|(t, w)| w * t.predict_row(x))
                .sum::<f64>()
    }
}

/// Split point between two adjacent sorted values. Falls back to the upper
/// value when the midpoint rounds onto the lower one.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

/// Options for growing one variance-reduction CART tree.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CartParams {
    pub mtry: usize,
    pub min_leaf: usize,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grow an unpruned tree on `samples` (row ids, repeats allowed), sampling
/// `mtry` of the `features` at every split.
pub(crate) fn grow_cart<R: Rng>(
    x: &Matrix,
    y: &[f64],
    samples: Vec<usize>,
    features: &[usize],
    params: CartParams,
    rng: &mut R,
) -> RegressionTree {
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, samples)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, samples)];
    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
    let mtry = params.mtry.clamp(1, features.len().max(1));
    while let Some((slot, rows)) = stack.pop() {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&i| y[i]).sum();
        let value = sum / n as f64;
        let pure = rows.iter().all(|&i| y[i] == y[rows[0]]);
        let mut best: Option<Best> = None;
        if !pure && n >= 2 * params.min_leaf && !features.is_empty() {
            let mut cand: Vec<usize> = sample(rng, features.len(), mtry).into_iter().map(|k| features[k]).collect();
            cand.sort_unstable();
            let mut order = rows.clone();
            for &f in &cand {
                order.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
                let mut left_sum = 0.0;
                for k in 1..n {
                    left_sum += y[order[k - 1]];
                    let (lo, hi) = (x.get(order[k - 1], f), x.get(order[k], f));
                    if lo == hi || k < params.min_leaf || n - k < params.min_leaf {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64
                        - sum * sum / n as f64;
                    if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Best {
                            gain,
                            feature: f,
                            threshold: midpoint(lo, hi),
                        });
                    }
                }
            }
        }
        match best {
            None => nodes[slot] = Node::Leaf { value, cover: n as f64 },
            Some(b) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, b.feature) < b.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                nodes[slot] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                    cover: n as f64,
                };
                // right first so the left subtree is expanded first
                stack.push((right, r));
                stack.push((left, l));
            }
        }
    }
    RegressionTree { nodes }
}
