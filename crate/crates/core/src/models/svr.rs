//! ε-insensitive support vector regression with an RBF kernel, solved in the
//! dual by sequential minimal optimization with second-order working-set
//! selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default upper bound on training rows for the dense dual solver.
pub const DEFAULT_SVR_CAP: usize = 5_000;
/// Stopping tolerance on the maximal KKT violation.
pub const SVR_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

pub fn rbf(u: &[f64], v: &[f64], gamma: f64) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Support vectors with net dual weights (α - α*) and intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub gamma: f64,
    pub support: Vec<Vec<f64>>,
    pub coefs: Vec<f64>,
    pub intercept: f64,
}

impl SvrModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .support
                .iter()
                .zip(&self.coefs)
                .map(|(s, c)| c * rbf(s, x, self.gamma))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrFit {
    pub model: SvrModel,
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub iterations: usize,
    /// Dual objective ½θᵀKθ - θᵀy + ε‖θ‖₁ at θ = α - α*.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.epsilon >= 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Hyperparameter(format!(
                "SVR needs C > 0, ε >= 0, γ > 0 (got {}, {}, {})",
                self.c, self.epsilon, self.gamma
            )));
        }
        Ok(())
    }
}

pub fn fit_svr(x: &Matrix, y: &[f64], p: SvrParams, cap: usize) -> Result<SvrFit> {
    let c = vec![p.c; x.n_rows()];
    fit_svr_weighted(x, y, &c, p.epsilon, p.gamma, cap)
}

/// As [`fit_svr`] with a separate box bound per training row.
pub fn fit_svr_weighted(x: &Matrix, y: &[f64], c: &[f64], epsilon: f64, gamma: f64, cap: usize) -> Result<SvrFit> {
    let n = x.n_rows();
    for &ci in c {
        SvrParams { c: ci, epsilon, gamma }.validate()?;
    }
    if n == 0 || y.len() != n || c.len() != n {
        return Err(Error::invalid("SVR needs matching, non-empty inputs"));
    }
    if n > cap {
        return Err(Error::invalid(format!(
            "SVR training set has {n} rows, above the dual-solver cap {cap}; subsample the data or raise the cap"
        )));
    }
    let kern: Vec<f64> = {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rbf(x.row(i), x.row(j), gamma);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    };
    let kk = |i: usize, j: usize| kern[(i % n) * n + (j % n)];
    let l = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let bound = |t: usize| c[t % n];
    let mut a = vec![0.0; l];
    let mut g: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let max_iter = (100 * l).max(10_000_000);
    let mut iter = 0;
    while iter < max_iter {
        // working-set selection
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let up = if sign(t) > 0.0 { a[t] < bound(t) } else { a[t] > 0.0 };
            if up && -sign(t) * g[t] > gmax {
                gmax = -sign(t) * g[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            let low = if sign(t) > 0.0 { a[t] > 0.0 } else { a[t] < bound(t) };
            if !low {
                continue;
            }
            let yg = sign(t) * g[t];
            gmax2 = gmax2.max(yg);
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax + yg;
            if b > 0.0 {
                let mut quad = kk(i_sel, i_sel) + kk(t, t) - 2.0 * kk(i_sel, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let o = -(b * b) / quad;
                if o < obj_min {
                    obj_min = o;
                    j_sel = t;
                }
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax + gmax2 < SVR_TOL {
            break;
        }
        iter += 1;
        let (i, j) = (i_sel, j_sel);
        let (ci, cj) = (bound(i), bound(j));
        let (old_i, old_j) = (a[i], a[j]);
        let qij = sign(i) * sign(j) * kk(i, j);
        if sign(i) != sign(j) {
            let mut quad = kk(i, i) + kk(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > ci - cj {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = ci - diff;
                }
            } else if a[j] > cj {
                a[j] = cj;
                a[i] = cj + diff;
            }
        } else {
            let mut quad = kk(i, i) + kk(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > ci {
                if a[i] > ci {
                    a[i] = ci;
                    a[j] = sum - ci;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > cj {
                if a[j] > cj {
                    a[j] = cj;
                    a[i] = sum - cj;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        if di != 0.0 || dj != 0.0 {
            for t in 0..l {
                g[t] += sign(t) * (sign(i) * kk(t, i) * di + sign(j) * kk(t, j) * dj);
            }
        }
    }

    // intercept from free variables, else the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = sign(t) * g[t];
        if a[t] >= bound(t) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if a[t] <= 0.0 {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    // net weights; α and α* are reported in complementary form
    let theta: Vec<f64> = (0..n).map(|i| a[i] - a[i + n]).collect();
    let alpha: Vec<f64> = theta.iter().map(|t| t.max(0.0)).collect();
    let alpha_star: Vec<f64> = theta.iter().map(|t| (-t).max(0.0)).collect();
    let mut objective = 0.0;
    for i in 0..n {
        for j in 0..n {
            objective += 0.5 * theta[i] * theta[j] * kern[i * n + j];
        }
        objective += -theta[i] * y[i] + epsilon * theta[i].abs();
    }
    let mut support = Vec::new();
    let mut coefs = Vec::new();
    for i in (0..n).filter(|&i| theta[i] != 0.0) {
        support.push(x.row(i).to_vec());
        coefs.push(theta[i]);
    }
    Ok(SvrFit {
        model: SvrModel {
            gamma,
            support,
            coefs,
            intercept: -rho,
        },
        alpha,
        alpha_star,
        iterations: iter,
        objective,
    })
}
