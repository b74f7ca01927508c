use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{ols, total_ss, RANK_TOL};
use crate::matrix::Matrix;

/// VIF threshold above which a column is considered collinear.
pub const DEFAULT_VIF_THRESHOLD: f64 = 10.0;

fn vif_by_regression(cols: &[Vec<f64>], j: usize) -> f64 {
    let others: Vec<&[f64]> = cols
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, c)| c.as_slice())
        .collect();
    let tss = total_ss(&cols[j]);
    match ols(&others, &cols[j]) {
        Some(f) => {
            let tol = 1.0 - f.rss / tss;
            if f.rss <= RANK_TOL * tss {
                f64::INFINITY
            } else {
                1.0 / (1.0 - tol)
            }
        }
        // others are themselves collinear: fall back to a reduced basis
        None => {
            let basis = independent_subset(&others);
            let reduced: Vec<&[f64]> = basis.iter().map(|&k| others[k]).collect();
            match ols(&reduced, &cols[j]) {
                Some(f) if f.rss > RANK_TOL * tss => tss / f.rss,
                _ => f64::INFINITY,
            }
        }
    }
}

fn independent_subset(cols: &[&[f64]]) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for k in 0..cols.len() {
        let mut trial: Vec<&[f64]> = keep.iter().map(|&i| cols[i]).collect();
        trial.push(cols[k]);
        let y = vec![0.0; cols[k].len()];
        if ols(&trial, &y).is_some() {
            keep.push(k);
        }
    }
    keep
}

/// Variance inflation factor of every column; exactly collinear columns get
/// `f64::INFINITY`.
pub fn vifs(x: &Matrix) -> Result<Vec<f64>> {
    let (n, d) = (x.n_rows(), x.n_cols());
    if d == 0 {
        return Ok(vec![]);
    }
    if n < 2 {
        return Err(Error::invalid("VIF needs at least 2 rows"));
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
    if d == 1 {
        return Ok(vec![1.0]);
    }
    // fast path: VIF_j is the j-th diagonal of the inverse correlation matrix
    let mut z = DMatrix::zeros(n, d);
    for (j, c) in cols.iter().enumerate() {
        let m = c.iter().sum::<f64>() / n as f64;
        let ss = total_ss(c).sqrt();
        if ss == 0.0 {
            return Err(Error::Constant(format!("column {j} is constant")));
        }
        for i in 0..n {
            z[(i, j)] = (c[i] - m) / ss;
        }
    }
    let corr = z.transpose() * &z;
    let eig = corr.clone().symmetric_eigen();
    let emax = eig.eigenvalues.max();
    let emin = eig.eigenvalues.min();
    // with n <= d the correlation matrix is singular and every column is
    // fully explained by the others
    if n > d && emin > 1e-8 * emax {
        if let Some(chol) = corr.cholesky() {
            let inv = chol.inverse();
            return Ok((0..d).map(|j| inv[(j, j)]).collect());
        }
    }
    // column j lies in the span of the others iff some null vector of Z has a
    // nonzero j-th entry
    let null: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] <= 1e-8 * emax).collect();
    Ok((0..d)
        .map(|j| {
            let w: f64 = null.iter().map(|&k| eig.eigenvectors[(j, k)].powi(2)).sum();
            if w > 1e-8 {
                f64::INFINITY
            } else {
                vif_by_regression(&cols, j)
            }
        })
        .collect())
}

/// Iteratively drop the column with the largest VIF while any exceeds
/// `threshold`. Returns retained column indices in ascending order; among
/// equal VIFs the lowest index is dropped.
pub fn vif_screen(x: &Matrix, threshold: f64) -> Result<Vec<usize>> {
    let mut keep: Vec<usize> = (0..x.n_cols()).collect();
    loop {
        if keep.len() < 2 {
            return Ok(keep);
        }
        let v = vifs(&x.select_columns(&keep))?;
        let mut worst = 0;
        for j in 1..v.len() {
            if v[j] > v[worst] {
                worst = j;
            }
        }
        if v[worst] > threshold {
            keep.remove(worst);
        } else {
            return Ok(keep);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_columns_all_one() {
        // centred, mutually orthogonal columns
        let rows = vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, -1.0],
            vec![-1.0, 1.0, -1.0],
            vec![-1.0, -1.0, 1.0],
        ];
        let x = Matrix::from_rows(&rows).unwrap();
        for v in vifs(&x).unwrap() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(vif_screen(&x, 10.0).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_column_dropped_once() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64;
                vec![t, (t * 1.7).sin(), t, ((i * 7) % 5) as f64]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let v = vifs(&x).unwrap();
        assert!(v[0].is_infinite() && v[2].is_infinite());
        assert_eq!(vif_screen(&x, 10.0).unwrap(), vec![1, 2, 3]);
    }
}
