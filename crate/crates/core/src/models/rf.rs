use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_cart, CartParams, RegressionTree, TreeEnsemble};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfParams {
    pub n_trees: usize,
    pub mtry: usize,
    /// Minimum number of samples in a leaf.
    pub min_node: usize,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFit {
    pub ensemble: TreeEnsemble,
    /// Out-of-bag RMSE over rows left out by at least one tree.
    pub oob_rmse: Option<f64>,
}

pub fn fit_rf(x: &Matrix, y: &[f64], p: RfParams, seed: u64) -> Result<ForestFit> {
    let n = x.n_rows();
    if n == 0 || y.len() != n {
        return Err(Error::invalid("random forest needs matching, non-empty X and y"));
    }
    if p.n_trees == 0 {
        return Err(Error::Hyperparameter("n_trees must be >= 1".into()));
    }
    if p.min_node == 0 || p.min_node > n {
        return Err(Error::Hyperparameter(format!("min_node {} outside [1, {n}]", p.min_node)));
    }
    if p.mtry == 0 || p.mtry > x.n_cols().max(1) {
        return Err(Error::Hyperparameter(format!("mtry {} outside [1, {}]", p.mtry, x.n_cols())));
    }
    let features: Vec<usize> = (0..x.n_cols()).collect();
    let grown: Vec<(RegressionTree, Vec<bool>)> = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, t as u64);
            let mut in_bag = vec![false; n];
            let rows: Vec<usize> = if p.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                in_bag.iter_mut().for_each(|b| *b = true);
                (0..n).collect()
            };
            let params = CartParams {
                mtry: p.mtry,
                min_leaf: p.min_node,
            };
            (grow_cart(x, y, rows, &features, params, &mut rng), in_bag)
        })
        .collect();

    let mut oob_sum = vec![0.0; n];
    let mut oob_n = vec![0usize; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_sum[i] += tree.predict_row(x.row(i));
            oob_n[i] += 1;
        }
    }
    let (mut se, mut k) = (0.0, 0usize);
    for i in (0..n).filter(|&i| oob_n[i] > 0) {
        se += (oob_sum[i] / oob_n[i] as f64 - y[i]).powi(2);
        k += 1;
    }
    let trees: Vec<RegressionTree> = grown.into_iter().map(|(t, _)| t).collect();
    let w = 1.0 / trees.len() as f64;
    Ok(ForestFit {
        ensemble: TreeEnsemble {
            base: 0.0,
            weights: vec![w; trees.len()],
            trees,
        },
        oob_rmse: (k > 0).then(|| (se / k as f64).sqrt()),
    })
}
