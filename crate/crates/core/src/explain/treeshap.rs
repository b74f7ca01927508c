//! Path-dependent TreeSHAP (polynomial-time exact Shapley values for trees).

use crate::matrix::Matrix;
use crate::models::{Node, RegressionTree, TreeEnsemble};

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    pweight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let d = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        pweight: if d == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..d).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / (d + 1) as f64;
        path[i].pweight = zero * path[i].pweight * (d - i) as f64 / (d + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let d = path.len() - 1;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut next = path[d].pweight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].pweight * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            path[i].pweight = path[i].pweight * (d + 1) as f64 / (zero * (d - i) as f64);
        }
    }
    for i in index..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let d = path.len() - 1;
    let (one, zero) = (path[index].one, path[index].zero);
    let mut next = path[d].pweight;
    let mut total = 0.0;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].pweight - tmp * zero * (d - i) as f64 / (d + 1) as f64;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((d - i) as f64 / (d + 1) as f64);
        }
    }
    total
}

/// Fraction of `parent` cover that flows into `child`; zero for an empty parent.
fn fraction(child: f64, parent: f64) -> f64 {
    if parent > 0.0 {
        child / parent
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &RegressionTree,
    covers: &[f64],
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    mut path: Vec<PathElement>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend(&mut path, zero, one, feature);
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                if let Some(f) = el.feature {
                    phi[f] += w * (el.one - el.zero) * value;
                }
            }
        }
        Node::Split {
            feature: split,
            threshold,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if x[*split] < *threshold { (*left, *right) } else { (*right, *left) };
            let w = covers[node];
            let hot_zero = fraction(covers[hot], w);
            let cold_zero = fraction(covers[cold], w);
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*split)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, covers, x, phi, hot, path.clone(), hot_zero * in_zero, in_one, Some(*split));
            // a cold branch with no cover and no "one" weight contributes nothing
            if cold_zero * in_zero != 0.0 {
                recurse(tree, covers, x, phi, cold, path, cold_zero * in_zero, 0.0, Some(*split));
            }
        }
    }
}

/// Shapley values of one tree at `x` (length = number of features), using
/// `covers` (one per node) for the path weighting.
pub fn tree_shap_row(tree: &RegressionTree, covers: &[f64], x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, covers, x, &mut phi, 0, Vec::new(), 1.0, 1.0, None);
    phi
}

/// Cover-weighted mean leaf value of a tree.
pub fn expected_value(tree: &RegressionTree, covers: &[f64]) -> f64 {
    fn go(t: &RegressionTree, c: &[f64], i: usize) -> f64 {
        match &t.nodes[i] {
            Node::Leaf { value, .. } => *value,
            Node::Split { left, right, .. } => {
                fraction(c[*left], c[i]) * go(t, c, *left) + fraction(c[*right], c[i]) * go(t, c, *right)
            }
        }
    }
    go(tree, covers, 0)
}

/// Node covers recorded at training time.
pub fn training_covers(tree: &RegressionTree) -> Vec<f64> {
    tree.nodes.iter().map(Node::cover).collect()
}

/// Node covers obtained by routing `rows` through the tree.
pub fn covers_from_rows(tree: &RegressionTree, rows: &Matrix) -> Vec<f64> {
    let mut c = vec![0.0; tree.nodes.len()];
    for r in rows.rows() {
        let mut i = 0;
        loop {
            c[i] += 1.0;
            match &tree.nodes[i] {
                Node::Leaf { .. } => break,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if r[*feature] < *threshold { *left } else { *right },
            }
        }
    }
    c
}

/// Base value and attributions of an ensemble at one row.
pub fn ensemble_shap_row(ens: &TreeEnsemble, covers: &[Vec<f64>], x: &[f64], n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    for ((t, w), c) in ens.trees.iter().zip(&ens.weights).zip(covers) {
        for (p, v) in phi.iter_mut().zip(tree_shap_row(t, c, x, n_features)) {
            *p += w * v;
        }
    }
    phi
}

pub fn ensemble_expected_value(ens: &TreeEnsemble, covers: &[Vec<f64>]) -> f64 {
    ens.base
        + ens
            .trees
            .iter()
            .zip(&ens.weights)
            .zip(covers)
            .map(|((t, w), c)| w * expected_value(t, c))
            .sum::<f64>()
}
