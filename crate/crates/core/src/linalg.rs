//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff below which a design counts as singular.
pub const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares fit with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub rss: f64,
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sum of squared deviations from the mean.
pub fn total_ss(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

/// Regress `y` on `cols` plus an intercept. Returns `None` when the centered
/// design is rank deficient.
pub fn ols(cols: &[&[f64]], y: &[f64]) -> Option<OlsFit> {
    let n = y.len();
    let k = cols.len();
    let ym = mean(y);
    if k == 0 {
        return Some(OlsFit {
            intercept: ym,
            coefs: vec![],
            rss: total_ss(y),
        });
    }
    let means: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let a = DMatrix::from_fn(n, k, |i, j| cols[j][i] - means[j]);
    let b = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let beta = solve_full_rank(a, &b)?;
    let intercept = ym - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    let coefs: Vec<f64> = beta.iter().copied().collect();
    let rss = (0..n)
        .map(|i| {
            let f = intercept + (0..k).map(|j| coefs[j] * cols[j][i]).sum::<f64>();
            (y[i] - f).powi(2)
        })
        .sum();
    Some(OlsFit { intercept, coefs, rss })
}

/// Least squares solution of `a x = b`, or `None` if `a` lacks full column rank.
pub fn solve_full_rank(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() < a.ncols() {
        return None;
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return None;
    }
    svd.solve(b, 0.0).ok()
}
