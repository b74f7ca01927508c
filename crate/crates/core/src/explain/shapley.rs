//! Exact Shapley values by coalition enumeration (interventional value
//! function averaged over a background set).

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default ceiling on the number of features for enumeration.
pub const ENUMERATION_LIMIT: usize = 12;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Shapley values of `f` at `x`.
///
/// v(S) is the mean over background rows of `f` evaluated with features in S
/// taken from `x` and the rest from the background row.
pub fn enumerate_shapley<F>(f: F, x: &[f64], background: &Matrix, limit: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let d = x.len();
    if d > limit {
        return Err(Error::invalid(format!(
            "{d} features exceed the enumeration limit {limit}"
        )));
    }
    if background.n_cols() != d || background.n_rows() == 0 {
        return Err(Error::invalid("background must be non-empty with one column per feature"));
    }
    let n_sets = 1usize << d;
    let mut v = vec![0.0; n_sets];
    let mut z = vec![0.0; d];
    for (mask, val) in v.iter_mut().enumerate() {
        let mut s = 0.0;
        for b in background.rows() {
            for j in 0..d {
                z[j] = if mask & (1 << j) != 0 { x[j] } else { b[j] };
            }
            s += f(&z);
        }
        *val = s / background.n_rows() as f64;
    }
    let weights: Vec<f64> = (0..d).map(|s| factorial(s) * factorial(d - s - 1) / factorial(d)).collect();
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1 << j;
        for mask in (0..n_sets).filter(|m| m & bit == 0) {
            *p += weights[mask.count_ones() as usize] * (v[mask | bit] - v[mask]);
        }
    }
    Ok(phi)
}
