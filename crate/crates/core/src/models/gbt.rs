//! Second-order gradient boosting with exact greedy level-wise splits.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Node, RegressionTree, TreeEnsemble};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub eta: f64,
    pub max_depth: usize,
    pub rounds: usize,
    pub subsample: f64,
    pub colsample: f64,
    pub reg_lambda: f64,
    pub reg_gamma: f64,
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Hyperparameter(m.into()));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must be in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) || !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad("subsample and colsample must be in (0, 1]");
        }
        if !(self.reg_lambda >= 0.0) || !(self.reg_gamma >= 0.0) {
            return bad("reg_lambda and reg_gamma must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostFit {
    pub ensemble: TreeEnsemble,
    /// Mean squared training error after each round (entry 0 is the base score).
    pub train_loss: Vec<f64>,
}

/// Gain of splitting (G, H) into (gl, hl) and the remainder.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda == 0.0 {
        0.0
    } else {
        -g / (h + lambda)
    }
}

struct Frontier {
    node: usize,
    g: f64,
    h: f64,
    best: Option<(f64, usize, f64)>,
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

pub fn fit_gbt(x: &Matrix, y: &[f64], p: GbtParams, seed: u64) -> Result<BoostFit> {
    p.validate()?;
    let (n, d) = (x.n_rows(), x.n_cols());
    if n == 0 || y.len() != n {
        return Err(Error::invalid("boosting needs matching, non-empty X and y"));
    }
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mut loss = vec![mse(&pred, y)];
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            o
        })
        .collect();
    let n_rows_round = ((p.subsample * n as f64).floor() as usize).clamp(1, n);
    let n_cols_tree = ((p.colsample * d as f64).floor() as usize).clamp(1, d.max(1));

    let mut trees = Vec::with_capacity(p.rounds);
    for round in 0..p.rounds {
        let mut rng = substream(derive_seed(seed, &[round as u64]), 0);
        let mut in_sample = vec![n_rows_round == n; n];
        if n_rows_round < n {
            for i in sample(&mut rng, n, n_rows_round) {
                in_sample[i] = true;
            }
        }
        let mut feats: Vec<usize> = if n_cols_tree < d {
            sample(&mut rng, d, n_cols_tree).into_vec()
        } else {
            (0..d).collect()
        };
        feats.sort_unstable();
        let grad: Vec<f64> = pred.iter().zip(y).map(|(f, t)| f - t).collect();
        let tree = grow(x, &grad, &in_sample, &feats, &sorted, &p);
        for i in 0..n {
            pred[i] += p.eta * tree.predict_row(x.row(i));
        }
        loss.push(mse(&pred, y));
        trees.push(tree);
    }
    Ok(BoostFit {
        ensemble: TreeEnsemble {
            base,
            weights: vec![p.eta; trees.len()],
            trees,
        },
        train_loss: loss,
    })
}

fn grow(
    x: &Matrix,
    grad: &[f64],
    in_sample: &[bool],
    feats: &[usize],
    sorted: &[Vec<usize>],
    p: &GbtParams,
) -> RegressionTree {
    let n = grad.len();
    const NONE: usize = usize::MAX;
    let (mut g0, mut h0) = (0.0, 0.0);
    for i in (0..n).filter(|&i| in_sample[i]) {
        g0 += grad[i];
        h0 += 1.0;
    }
    let mut nodes = vec![Node::Leaf { value: 0.0, cover: h0 }];
    // frontier slot of each in-sample row, NONE once its node is final
    let mut slot_of: Vec<usize> = (0..n).map(|i| if in_sample[i] { 0 } else { NONE }).collect();
    let mut frontier = vec![Frontier {
        node: 0,
        g: g0,
        h: h0,
        best: None,
    }];

    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let m = frontier.len();
        let mut gl = vec![0.0; m];
        let mut hl = vec![0.0; m];
        let mut last = vec![f64::NAN; m];
        for &f in feats {
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &i in &sorted[f] {
                let s = slot_of[i];
                if s == NONE {
                    continue;
                }
                let v = x.get(i, f);
                if hl[s] > 0.0 && v > last[s] {
                    let fr = &mut frontier[s];
                    let gain = split_gain(gl[s], hl[s], fr.g, fr.h, p.reg_lambda, p.reg_gamma);
                    if gain > 0.0 && fr.best.is_none_or(|(b, _, _)| gain > b) {
                        fr.best = Some((gain, f, midpoint(last[s], v)));
                    }
                }
                gl[s] += grad[i];
                hl[s] += 1.0;
                last[s] = v;
            }
        }
        // expand nodes that found a split
        let mut next: Vec<Frontier> = Vec::new();
        let mut remap = vec![(NONE, NONE); m];
        for (s, fr) in frontier.iter().enumerate() {
            match fr.best {
                None => {
                    nodes[fr.node] = Node::Leaf {
                        value: leaf_weight(fr.g, fr.h, p.reg_lambda),
                        cover: fr.h,
                    }
                }
                Some((_, feature, threshold)) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
                    nodes[fr.node] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        cover: fr.h,
                    };
                    remap[s] = (next.len(), next.len() + 1);
                    for node in [left, right] {
                        next.push(Frontier {
                            node,
                            g: 0.0,
                            h: 0.0,
                            best: None,
                        });
                    }
                }
            }
        }
        for i in 0..n {
            let s = slot_of[i];
            if s == NONE {
                continue;
            }
            slot_of[i] = match (remap[s], &frontier[s].best) {
                ((l, r), Some((_, f, t))) => {
                    let c = if x.get(i, *f) < *t { l } else { r };
                    next[c].g += grad[i];
                    next[c].h += 1.0;
                    c
                }
                _ => NONE,
            };
        }
        frontier = next;
    }
    for fr in &frontier {
        nodes[fr.node] = Node::Leaf {
            value: leaf_weight(fr.g, fr.h, p.reg_lambda),
            cover: fr.h,
        };
    }
    RegressionTree { nodes }
}
