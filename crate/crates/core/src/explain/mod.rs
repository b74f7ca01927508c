//! Shapley attributions for trained models and their aggregations.

mod shapley;
mod treeshap;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{Fitted, TrainedModel};

pub use shapley::{enumerate_shapley, ENUMERATION_LIMIT};
pub use treeshap::{
    covers_from_rows, ensemble_expected_value, ensemble_shap_row, expected_value, training_covers, tree_shap_row,
};

/// Source of the node covers used for path weighting.
#[derive(Debug, Clone)]
pub enum Background<'a> {
    /// Covers recorded while the trees were grown.
    TrainingCovers,
    /// Covers recounted by routing these raw rows (columns named as in
    /// `names`) through every tree.
    Rows { x: &'a Matrix, names: &'a [String] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub base_value: f64,
    pub feature_names: Vec<String>,
    pub row_ids: Vec<String>,
    pub cities: Vec<String>,
    /// n_obs x n_features attributions (dB(A)).
    pub values: Matrix,
    /// Raw predictor values of the explained rows, same layout as `values`.
    pub feature_values: Matrix,
    pub predictions: Vec<f64>,
}

impl ShapMatrix {
    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::MissingColumn(name.into()))
    }

    /// Largest |base + Σφ - prediction| over rows.
    pub fn max_additivity_error(&self) -> f64 {
        self.values
            .rows()
            .zip(&self.predictions)
            .map(|(r, p)| (self.base_value + r.iter().sum::<f64>() - p).abs())
            .fold(0.0, f64::max)
    }
}

/// TreeSHAP attributions of a tree-ensemble model at raw rows `x`.
///
/// Attributions are reported for every training predictor; predictors that
/// were dropped as constant receive exactly zero.
pub fn tree_shap(
    model: &TrainedModel,
    x: &Matrix,
    names: &[String],
    row_ids: &[String],
    cities: &[String],
    background: Background<'_>,
) -> Result<ShapMatrix> {
    let Fitted::Trees(ens) = &model.fitted else {
        return Err(Error::Unsupported(format!(
            "TreeSHAP needs a tree ensemble, got {}; use enumerate_shapley for small feature sets",
            model.family
        )));
    };
    if row_ids.len() != x.n_rows() || cities.len() != x.n_rows() {
        return Err(Error::invalid("row ids and cities must match the explained rows"));
    }
    let covers: Vec<Vec<f64>> = match background {
        Background::TrainingCovers => ens.trees.iter().map(training_covers).collect(),
        Background::Rows { x: bx, names: bn } => {
            let bz = model.pipeline.apply(bx, bn)?;
            ens.trees.iter().map(|t| covers_from_rows(t, &bz)).collect()
        }
    };
    let z = model.pipeline.apply(x, names)?;
    let learner_cols = model.pipeline.learner_columns();
    let d_in = learner_cols.len();
    let feature_names = model.pipeline.feature_names.clone();
    // learner column -> position in feature_names
    let out_pos: Vec<usize> = learner_cols
        .iter()
        .map(|c| feature_names.iter().position(|f| f == c).expect("learner column among features"))
        .collect();
    let raw_pos: Vec<usize> = feature_names
        .iter()
        .map(|f| names.iter().position(|n| n == f).ok_or_else(|| Error::MissingColumn(f.clone())))
        .collect::<Result<_>>()?;

    let rows: Vec<(Vec<f64>, f64)> = (0..z.n_rows())
        .into_par_iter()
        .map(|i| {
            let zr = z.row(i);
            let phi = ensemble_shap_row(ens, &covers, zr, d_in);
            let mut full = vec![0.0; feature_names.len()];
            for (k, v) in phi.into_iter().enumerate() {
                full[out_pos[k]] = v;
            }
            (full, ens.predict_row(zr))
        })
        .collect();
    let mut values = Matrix::zeros(x.n_rows(), feature_names.len());
    let mut feature_values = Matrix::zeros(x.n_rows(), feature_names.len());
    let mut predictions = Vec::with_capacity(x.n_rows());
    for (i, (phi, p)) in rows.into_iter().enumerate() {
        values.row_mut(i).copy_from_slice(&phi);
        for (k, &j) in raw_pos.iter().enumerate() {
            feature_values.set(i, k, x.get(i, j));
        }
        predictions.push(p);
    }
    Ok(ShapMatrix {
        base_value: ensemble_expected_value(ens, &covers),
        feature_names,
        row_ids: row_ids.to_vec(),
        cities: cities.to_vec(),
        values,
        feature_values,
        predictions,
    })
}

/// Prediction function of a model over raw rows ordered as its
/// `pipeline.feature_names`, for use with [`enumerate_shapley`].
pub fn model_function(model: &TrainedModel) -> impl Fn(&[f64]) -> f64 + '_ {
    let names = &model.pipeline.feature_names;
    move |row: &[f64]| {
        let m = Matrix::from_vec(1, row.len(), row.to_vec()).expect("row shape");
        model.predict(&m, names).map(|p| p[0]).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub mean_abs: f64,
}

fn rank(names: &[String], values: &Matrix, rows: &[usize]) -> Vec<Importance> {
    let mut out: Vec<Importance> = names
        .iter()
        .enumerate()
        .map(|(j, f)| Importance {
            feature: f.clone(),
            mean_abs: rows.iter().map(|&i| values.get(i, j).abs()).sum::<f64>() / rows.len().max(1) as f64,
        })
        .collect();
    out.sort_by(|a, b| b.mean_abs.total_cmp(&a.mean_abs).then_with(|| a.feature.cmp(&b.feature)));
    out
}

/// Features by mean |φ| (descending, ties by name), truncated to `top_k`.
pub fn importance_ranking(shap: &ShapMatrix, top_k: Option<usize>) -> Vec<Importance> {
    let rows: Vec<usize> = (0..shap.values.n_rows()).collect();
    let mut r = rank(&shap.feature_names, &shap.values, &rows);
    if let Some(k) = top_k {
        r.truncate(k);
    }
    r
}

/// Per-city rankings, each truncated to `top_k`.
pub fn importance_by_city(shap: &ShapMatrix, top_k: Option<usize>) -> BTreeMap<String, Vec<Importance>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in shap.cities.iter().enumerate() {
        groups.entry(c.clone()).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(c, rows)| {
            let mut r = rank(&shap.feature_names, &shap.values, &rows);
            if let Some(k) = top_k {
                r.truncate(k);
            }
            (c, r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmRecord {
    pub row_id: String,
    pub city: String,
    pub feature: String,
    pub shap: f64,
    pub value: f64,
    /// Min-max normalized value within the feature (0.5 when constant).
    pub normalized: f64,
}

pub fn beeswarm_data(shap: &ShapMatrix) -> Vec<BeeswarmRecord> {
    let d = shap.feature_names.len();
    let ranges: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let c = shap.feature_values.column(j);
            (c.iter().copied().fold(f64::INFINITY, f64::min), c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let mut out = Vec::with_capacity(shap.values.n_rows() * d);
    for i in 0..shap.values.n_rows() {
        for (j, f) in shap.feature_names.iter().enumerate() {
            let v = shap.feature_values.get(i, j);
            let (lo, hi) = ranges[j];
            out.push(BeeswarmRecord {
                row_id: shap.row_ids[i].clone(),
                city: shap.cities[i].clone(),
                feature: f.clone(),
                shap: shap.values.get(i, j),
                value: v,
                normalized: if hi > lo { (v - lo) / (hi - lo) } else { 0.5 },
            });
        }
    }
    out
}

/// (raw value, φ) pairs of one feature sorted by value.
pub fn dependence_data(shap: &ShapMatrix, feature: &str) -> Result<Vec<(f64, f64)>> {
    let j = shap.feature_index(feature)?;
    let mut v: Vec<(f64, f64)> = (0..shap.values.n_rows())
        .map(|i| (shap.feature_values.get(i, j), shap.values.get(i, j)))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(v)
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_shap_csv(shap: &ShapMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "city".to_string()];
    header.extend(shap.feature_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..shap.values.n_rows() {
        let mut rec = vec![shap.row_ids[i].clone(), shap.cities[i].clone()];
        rec.extend(shap.values.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    flush(w, path)
}

pub fn write_importance_csv(
    global: &[Importance],
    by_city: &BTreeMap<String, Vec<Importance>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "rank", "feature", "mean_abs_shap"])?;
    let groups = std::iter::once(("all", global)).chain(by_city.iter().map(|(c, v)| (c.as_str(), v.as_slice())));
    for (g, list) in groups {
        for (k, imp) in list.iter().enumerate() {
            w.write_record([g, &(k + 1).to_string(), &imp.feature, &imp.mean_abs.to_string()])?;
        }
    }
    flush(w, path)
}

pub fn write_beeswarm_csv(records: &[BeeswarmRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    flush(w, path)
}

pub fn write_dependence_csv(feature: &str, pairs: &[(f64, f64)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "value", "shap"])?;
    for (v, s) in pairs {
        w.write_record([feature, &v.to_string(), &s.to_string()])?;
    }
    flush(w, path)
}
