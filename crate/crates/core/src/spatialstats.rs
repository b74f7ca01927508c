//! Global Moran's I with inverse-distance weights and a permutation test.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pt;
use crate::matrix::Matrix;
use crate::rng::substream;

pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub weights: Matrix,
    pub power: f64,
    pub row_standardized: bool,
}

impl WeightMatrix {
    pub fn n(&self) -> usize {
        self.weights.n_rows()
    }

    pub fn s0(&self) -> f64 {
        self.weights.as_slice().iter().sum()
    }
}

/// w_ij = 1/d_ij^power off the diagonal, optionally scaled to unit row sums.
pub fn inverse_distance_weights(points: &[Pt], power: f64, row_standardize: bool) -> Result<WeightMatrix> {
    let n = points.len();
    if n < 3 {
        return Err(Error::invalid("weight matrix needs at least 3 points"));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::invalid(format!("distance power must be positive, got {power}")));
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = points[i].dist(points[j]);
            if d == 0.0 {
                return Err(Error::invalid(format!("points {i} and {j} coincide")));
            }
            w.set(i, j, d.powf(-power));
        }
        if row_standardize {
            let s: f64 = w.row(i).iter().sum();
            for v in w.row_mut(i) {
                *v /= s;
            }
        }
    }
    if !w.is_finite() {
        return Err(Error::Numerical("non-finite inverse-distance weight".into()));
    }
    Ok(WeightMatrix {
        weights: w,
        power,
        row_standardized: row_standardize,
    })
}

fn deviations(values: &[f64], w: &WeightMatrix) -> Result<(Vec<f64>, f64)> {
    if values.len() != w.n() {
        return Err(Error::invalid(format!(
            "{} values for a {}-point weight matrix",
            values.len(),
            w.n()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Moran's I input must be finite"));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    if m2 == 0.0 || values.iter().all(|&v| v == values[0]) {
        return Err(Error::Constant("Moran's I values".into()));
    }
    Ok((z, m2))
}

fn statistic(z: &[f64], m2: f64, w: &WeightMatrix, s0: f64) -> f64 {
    let mut cross = 0.0;
    for (i, zi) in z.iter().enumerate() {
        let row = w.weights.row(i);
        let wz: f64 = row.iter().zip(z).map(|(a, b)| a * b).sum();
        cross += zi * wz;
    }
    z.len() as f64 / s0 * cross / m2
}

/// I = (n/S0) Σ w_ij z_i z_j / Σ z_i^2 with z the centred values.
pub fn morans_i(values: &[f64], w: &WeightMatrix) -> Result<f64> {
    let (z, m2) = deviations(values, w)?;
    Ok(statistic(&z, m2, w, w.s0()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranTest {
    pub i: f64,
    pub expected: f64,
    pub n_perm: usize,
    /// Extreme-deviation count around E[I], both tails.
    pub p_two_sided: f64,
    /// Upper tail: permutations with I_perm >= I_obs.
    pub p_greater: f64,
    pub power: f64,
    pub row_standardized: bool,
}

/// Monte Carlo test of I against random relabelings of `values`.
///
/// Permutation k draws from substream k of `seed`, so the result does not
/// depend on the thread count.
pub fn permutation_test(values: &[f64], w: &WeightMatrix, n_perm: usize, seed: u64) -> Result<MoranTest> {
    if n_perm == 0 {
        return Err(Error::invalid("n_perm must be positive"));
    }
    let (z, m2) = deviations(values, w)?;
    let s0 = w.s0();
    let observed = statistic(&z, m2, w, s0);
    let expected = -1.0 / (z.len() as f64 - 1.0);
    let dev = (observed - expected).abs();
    let perms: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut zp = z.clone();
            zp.shuffle(&mut substream(seed, k as u64));
            statistic(&zp, m2, w, s0)
        })
        .collect();
    // relative slack so that permutations reproducing I_obs up to rounding count as ties
    let eps = 1e-12 * (1.0 + observed.abs());
    let extreme = perms.iter().filter(|&&v| (v - expected).abs() >= dev - eps).count();
    let greater = perms.iter().filter(|&&v| v >= observed - eps).count();
    let denom = (n_perm + 1) as f64;
    Ok(MoranTest {
        i: observed,
        expected,
        n_perm,
        p_two_sided: (1 + extreme) as f64 / denom,
        p_greater: (1 + greater) as f64 / denom,
        power: w.power,
        row_standardized: w.row_standardized,
    })
}

/// Moran's I of one model's out-of-fold residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDiagnostic {
    pub label: String,
    pub repeat: usize,
    pub moran: MoranTest,
}
