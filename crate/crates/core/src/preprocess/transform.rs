use serde::{Deserialize, Serialize};

use super::yeo_johnson::{distinct_count, fit_lambda, yeo_johnson};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-column Yeo-Johnson parameters with the post-transform mean and SD.
///
/// Columns with only two distinct values keep λ = 1 (the likelihood has no
/// interior maximum for them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub columns: Vec<String>,
    pub lambdas: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// When false only the power transform is applied.
    pub standardize: bool,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

impl FittedTransform {
    pub fn fit(x: &Matrix, columns: &[String], standardize: bool) -> Result<Self> {
        if columns.len() != x.n_cols() {
            return Err(Error::ColumnMismatch(format!(
                "{} names for {} columns",
                columns.len(),
                x.n_cols()
            )));
        }
        if x.n_rows() < 2 {
            return Err(Error::invalid("transform fit needs at least 2 rows"));
        }
        let mut lambdas = Vec::with_capacity(x.n_cols());
        let mut means = Vec::with_capacity(x.n_cols());
        let mut sds = Vec::with_capacity(x.n_cols());
        for (j, name) in columns.iter().enumerate() {
            let col = x.column(j);
            let lambda = match distinct_count(&col, 3) {
                0 | 1 => return Err(Error::Constant(format!("column {name} is constant"))),
                2 => 1.0,
                _ => fit_lambda(&col)?,
            };
            let z: Vec<f64> = col.iter().map(|&v| yeo_johnson(v, lambda)).collect();
            let (m, sd) = mean_sd(&z);
            if !(sd > 0.0) || !sd.is_finite() || !m.is_finite() {
                return Err(Error::Numerical(format!("column {name}: degenerate transformed spread")));
            }
            lambdas.push(lambda);
            means.push(m);
            sds.push(sd);
        }
        Ok(Self {
            columns: columns.to_vec(),
            lambdas,
            means,
            sds,
            standardize,
        })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let z = yeo_johnson(v, self.lambdas[j]);
                if self.standardize {
                    (z - self.means[j]) / self.sds[j]
                } else {
                    z
                }
            })
            .collect()
    }

    /// Apply stored parameters; `columns` must equal the fitted column list.
    pub fn apply(&self, x: &Matrix, columns: &[String]) -> Result<Matrix> {
        if columns != self.columns.as_slice() {
            return Err(Error::ColumnMismatch(format!(
                "transform fitted on [{}], got [{}]",
                self.columns.join(", "),
                columns.join(", ")
            )));
        }
        let mut out = Matrix::zeros(x.n_rows(), x.n_cols());
        for i in 0..x.n_rows() {
            out.row_mut(i).copy_from_slice(&self.apply_row(x.row(i)));
        }
        Ok(out)
    }
}

/// Fit a standardizing transform and return it with the transformed data.
pub fn fit_transform(x: &Matrix, columns: &[String]) -> Result<(FittedTransform, Matrix)> {
    let t = FittedTransform::fit(x, columns, true)?;
    let z = t.apply(x, columns)?;
    Ok((t, z))
}

pub fn apply_transform(t: &FittedTransform, x: &Matrix, columns: &[String]) -> Result<Matrix> {
    t.apply(x, columns)
}
