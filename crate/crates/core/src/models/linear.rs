//! Forward-stepwise least squares and elastic net.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mean, ols, total_ss};
use crate::matrix::Matrix;

/// Intercept plus one coefficient per input column (zero when unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearFit {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepwiseFit {
    pub fit: LinearFit,
    /// Columns in the order they entered.
    pub selected: Vec<usize>,
    /// Adjusted R² after each accepted step, starting with the empty model (0).
    pub adj_r2_trace: Vec<f64>,
}

pub fn adjusted_r2(rss: f64, tss: f64, n: usize, p: usize) -> f64 {
    1.0 - (rss / (n - p - 1) as f64) / (tss / (n - 1) as f64)
}

/// Greedy forward selection by residual sum of squares, stopping when the
/// adjusted R² of the best addition does not improve or `limit` terms are in.
pub fn fit_lm_forward(x: &Matrix, y: &[f64], limit: usize) -> Result<StepwiseFit> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::invalid("X and y lengths differ"));
    }
    if n < limit + 2 || n < 3 {
        return Err(Error::invalid(format!("{n} rows cannot support {limit} terms")));
    }
    let tss = total_ss(y);
    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut current_adj = 0.0;
    let mut trace = vec![0.0];
    let mut current = ols(&[], y).expect("intercept-only fit");
    while selected.len() < limit && selected.len() + 2 < n {
        let mut best: Option<(f64, usize, crate::linalg::OlsFit)> = None;
        for j in (0..d).filter(|j| !selected.contains(j)) {
            let mut design: Vec<&[f64]> = selected.iter().map(|&k| cols[k].as_slice()).collect();
            design.push(&cols[j]);
            // singular candidates are skipped
            if let Some(f) = ols(&design, y) {
                if best.as_ref().is_none_or(|(rss, _, _)| f.rss < *rss) {
                    best = Some((f.rss, j, f));
                }
            }
        }
        let Some((rss, j, f)) = best else { break };
        let adj = if tss > 0.0 {
            adjusted_r2(rss, tss, n, selected.len() + 1)
        } else {
            f64::NEG_INFINITY
        };
        if adj <= current_adj {
            break;
        }
        selected.push(j);
        trace.push(adj);
        current_adj = adj;
        current = f;
    }
    let mut coefs = vec![0.0; d];
    for (k, &j) in selected.iter().enumerate() {
        coefs[j] = current.coefs[k];
    }
    Ok(StepwiseFit {
        fit: LinearFit {
            intercept: current.intercept,
            coefs,
        },
        selected,
        adj_r2_trace: trace,
    })
}

/// Convergence threshold on the largest coefficient change per sweep.
pub const ENET_TOL: f64 = 1e-10;
pub const ENET_MAX_SWEEPS: usize = 10_000;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent for
/// (1/2n)||y - Xb - b0||² + λ(α||b||₁ + (1-α)/2 ||b||²).
pub fn fit_enet(x: &Matrix, y: &[f64], alpha: f64, lambda: f64) -> Result<LinearFit> {
    if !(0.0..=1.0).contains(&alpha) || !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Hyperparameter(format!("elastic net α={alpha} λ={lambda}")));
    }
    let (n, d) = (x.n_rows(), x.n_cols());
    if y.len() != n || n == 0 {
        return Err(Error::invalid("X and y lengths differ or are empty"));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to elastic net"));
    }
    let nf = n as f64;
    let ym = mean(y);
    let xm: Vec<f64> = (0..d).map(|j| mean(&x.column(j))).collect();
    // centred columns, stored column-major
    let xc: Vec<Vec<f64>> = (0..d).map(|j| (0..n).map(|i| x.get(i, j) - xm[j]).collect()).collect();
    let sq: Vec<f64> = xc.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf).collect();
    let mut r: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let mut beta = vec![0.0; d];
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    for _ in 0..ENET_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let c = &xc[j];
            let rho = c.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf + sq[j] * beta[j];
            let new = soft_threshold(rho, l1) / (sq[j] + l2);
            let delta = new - beta[j];
            if delta != 0.0 {
                for (ri, ci) in r.iter_mut().zip(c) {
                    *ri -= delta * ci;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < ENET_TOL {
            break;
        }
    }
    let intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearFit { intercept, coefs: beta })
}
