use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use super::metrics::{mae, r2, r2_ss, rmse};
use super::stats::{benjamini_hochberg, wilcoxon_rank_sum};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{fit_with_pipeline, Family, Hyperparams, ModelSpec, Pipeline};
use crate::rng::derive_seed;

/// Significance level for pairwise model comparisons.
pub const ALPHA: f64 = 0.05;

/// A labelled family with its hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub label: String,
    pub grid: Vec<Hyperparams>,
}

impl CvEntry {
    pub fn new(label: impl Into<String>, grid: Vec<Hyperparams>) -> Self {
        Self {
            label: label.into(),
            grid,
        }
    }

    pub fn family(&self) -> Result<Family> {
        let f = self
            .grid
            .first()
            .ok_or_else(|| Error::invalid(format!("empty grid for {}", self.label)))?
            .family();
        if self.grid.iter().any(|h| h.family() != f) {
            return Err(Error::invalid(format!("grid for {} mixes families", self.label)));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityMetrics {
    pub city: String,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub label: String,
    pub family: Family,
    pub repeat: usize,
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Squared correlation; missing when the predictions are constant.
    pub r2: Option<f64>,
    pub r2_ss: Option<f64>,
    pub grid_index: usize,
    pub hyperparams: Hyperparams,
    /// Mean inner RMSE of the chosen grid point (absent for one-point grids).
    pub inner_rmse: Option<f64>,
    pub per_city: Vec<CityMetrics>,
    pub test_rows: Vec<usize>,
    pub predictions: Vec<f64>,
    /// Preprocessing fitted on the outer-training rows.
    pub pipeline: Pipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub family: Family,
    pub mean_rmse: f64,
    pub sd_rmse: f64,
    pub mean_mae: f64,
    pub mean_r2: Option<f64>,
    pub mean_r2_ss: Option<f64>,
    pub r2_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub winner: String,
    pub alpha: f64,
    pub pairs: Vec<PairTest>,
}

impl Comparison {
    pub fn pair(&self, a: &str, b: &str) -> Option<&PairTest> {
        self.pairs
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub seed: u64,
    pub n: usize,
    pub labels: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub summaries: Vec<Summary>,
    pub comparison: Option<Comparison>,
    /// Describes the unit of comparison for the significance tests.
    pub note: String,
    /// Moran's I of out-of-fold residuals, one entry per model.
    #[serde(default)]
    pub residual_diagnostics: Vec<crate::spatialstats::ResidualDiagnostic>,
}

pub const COMPARISON_NOTE: &str = "pairwise two-tailed Wilcoxon rank-sum tests on per-fold outer RMSE \
(repeats x folds values per model), Benjamini-Hochberg adjusted; R2 is the squared Pearson correlation, \
r2_ss is 1 - SS_res/SS_tot";

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn per_city(y: &[f64], pred: &[f64], cities: &[String]) -> Result<Vec<CityMetrics>> {
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((a, b), c) in y.iter().zip(pred).zip(cities) {
        let g = groups.entry(c.as_str()).or_default();
        g.0.push(*a);
        g.1.push(*b);
    }
    groups
        .into_iter()
        .filter(|(_, (a, _))| a.len() >= 2)
        .map(|(c, (a, b))| {
            Ok(CityMetrics {
                city: c.to_string(),
                n: a.len(),
                rmse: rmse(&a, &b)?,
                mae: mae(&a, &b)?,
            })
        })
        .collect()
}

fn take(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Mean validation RMSE of every grid point over `splits`; split g is fit
/// with seed `seeds[g]`.
fn grid_scores(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    splits: &[(Vec<usize>, Vec<usize>)],
    seeds: &[u64],
    entry: &CvEntry,
    family: Family,
) -> Result<Vec<f64>> {
    let k = splits.len();
    let mut scores = vec![0.0; entry.grid.len()];
    for ((train, val), &seed) in splits.iter().zip(seeds) {
        let (xt, yt) = (x.select_rows(train), take(y, train));
        let (xv, yv) = (x.select_rows(val), take(y, val));
        let pipe = Pipeline::fit(&xt, names, family.policy())?;
        let fold_scores: Vec<f64> = entry
            .grid
            .par_iter()
            .map(|hp| {
                let m = fit_with_pipeline(&ModelSpec::new(hp.clone(), seed), pipe.clone(), &xt, names, &yt)?;
                rmse(&yv, &m.predict(&xv, names)?)
            })
            .collect::<Result<_>>()?;
        for (s, v) in scores.iter_mut().zip(fold_scores) {
            *s += v / k as f64;
        }
    }
    Ok(scores)
}

/// Index of the lowest score; the first one wins ties.
fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    best
}

/// Score every grid point by mean RMSE over the inner folds of (r, f).
#[allow(clippy::too_many_arguments)]
fn tune(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    plan: &FoldPlan,
    entry: &CvEntry,
    family: Family,
    r: usize,
    f: usize,
) -> Result<(usize, f64)> {
    let k = plan.inner[r][f].len();
    let splits: Vec<_> = (0..k).map(|g| plan.inner_split(r, f, g)).collect();
    let seeds: Vec<u64> = (0..k).map(|g| derive_seed(plan.seed, &[r as u64, f as u64, g as u64])).collect();
    let scores = grid_scores(x, names, y, &splits, &seeds, entry, family)?;
    let best = argmin(&scores);
    Ok((best, scores[best]))
}

/// Hyperparameters chosen by k-fold CV over all rows, and the model refit
/// on all rows with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub label: String,
    pub grid: Vec<Hyperparams>,
    pub cv_rmse: Vec<f64>,
    pub grid_index: usize,
}

/// Grid search by `k`-fold CV (folds from `seed`), then a refit on every row
/// with seed `derive_seed(seed, [u64::MAX])`.
pub fn select_and_fit(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    entry: &CvEntry,
    k: usize,
    seed: u64,
) -> Result<(Selection, crate::models::TrainedModel)> {
    let family = entry.family()?;
    if y.len() != x.n_rows() {
        return Err(Error::invalid("X and y sizes differ"));
    }
    let plan = super::folds::make_fold_plan_with(x.n_rows(), seed, 1, k, 2)?;
    let splits: Vec<_> = (0..k).map(|f| (plan.outer_train(0, f), plan.outer[0][f].clone())).collect();
    let seeds: Vec<u64> = (0..k).map(|f| derive_seed(seed, &[f as u64])).collect();
    let cv_rmse = if entry.grid.len() == 1 {
        vec![f64::NAN]
    } else {
        grid_scores(x, names, y, &splits, &seeds, entry, family)?
    };
    let grid_index = if entry.grid.len() == 1 { 0 } else { argmin(&cv_rmse) };
    let spec = ModelSpec::new(entry.grid[grid_index].clone(), derive_seed(seed, &[u64::MAX]));
    let model = crate::models::fit_model(&spec, x, names, y)?;
    Ok((
        Selection {
            label: entry.label.clone(),
            grid: entry.grid.clone(),
            cv_rmse,
            grid_index,
        },
        model,
    ))
}

/// Seed used for the outer refit of fold (r, f).
pub fn outer_seed(plan_seed: u64, r: usize, f: usize) -> u64 {
    derive_seed(plan_seed, &[r as u64, f as u64, u64::MAX])
}

/// Repeated k-fold CV with per-fold grid search on inner folds.
pub fn nested_cv(
    x: &Matrix,
    names: &[String],
    y: &[f64],
    cities: &[String],
    entries: &[CvEntry],
    plan: &FoldPlan,
) -> Result<CvReport> {
    let n = x.n_rows();
    if y.len() != n || cities.len() != n || plan.n != n {
        return Err(Error::invalid("X, y, cities and fold plan sizes differ"));
    }
    let mut labels: Vec<String> = Vec::new();
    for e in entries {
        e.family()?;
        if labels.contains(&e.label) {
            return Err(Error::invalid(format!("duplicate model label {}", e.label)));
        }
        labels.push(e.label.clone());
    }
    let jobs: Vec<(usize, usize, usize)> = (0..entries.len())
        .flat_map(|e| (0..plan.repeats()).flat_map(move |r| (0..plan.folds()).map(move |f| (e, r, f))))
        .collect();
    let folds: Vec<FoldResult> = jobs
        .par_iter()
        .map(|&(e, r, f)| {
            let entry = &entries[e];
            let family = entry.family()?;
            let (grid_index, inner_rmse) = if entry.grid.len() == 1 {
                (0, None)
            } else {
                let (i, s) = tune(x, names, y, plan, entry, family, r, f)?;
                (i, Some(s))
            };
            let train = plan.outer_train(r, f);
            let test = plan.outer[r][f].clone();
            let xt = x.select_rows(&train);
            let yt = take(y, &train);
            let pipeline = Pipeline::fit(&xt, names, family.policy())?;
            let hp = entry.grid[grid_index].clone();
            let spec = ModelSpec::new(hp.clone(), outer_seed(plan.seed, r, f));
            let model = fit_with_pipeline(&spec, pipeline.clone(), &xt, names, &yt)?;
            let ytest = take(y, &test);
            let pred = model.predict(&x.select_rows(&test), names)?;
            let test_cities: Vec<String> = test.iter().map(|&i| cities[i].clone()).collect();
            Ok(FoldResult {
                label: entry.label.clone(),
                family,
                repeat: r,
                fold: f,
                rmse: rmse(&ytest, &pred)?,
                mae: mae(&ytest, &pred)?,
                r2: r2(&ytest, &pred).ok(),
                r2_ss: r2_ss(&ytest, &pred).ok(),
                grid_index,
                hyperparams: hp,
                inner_rmse,
                per_city: per_city(&ytest, &pred, &test_cities)?,
                test_rows: test,
                predictions: pred,
                pipeline,
            })
        })
        .collect::<Result<_>>()?;
    let summaries = summarize(&labels, &folds);
    let comparison = if labels.len() >= 2 {
        Some(compare_models(&labels, &folds)?)
    } else {
        None
    };
    Ok(CvReport {
        seed: plan.seed,
        n,
        labels,
        folds,
        summaries,
        comparison,
        note: COMPARISON_NOTE.into(),
        residual_diagnostics: Vec::new(),
    })
}

pub fn fold_rmses<'a>(folds: &'a [FoldResult], label: &str) -> Vec<f64> {
    folds.iter().filter(|f| f.label == label).map(|f| f.rmse).collect()
}

pub fn summarize(labels: &[String], folds: &[FoldResult]) -> Vec<Summary> {
    labels
        .iter()
        .map(|l| {
            let fs: Vec<&FoldResult> = folds.iter().filter(|f| &f.label == l).collect();
            let rm: Vec<f64> = fs.iter().map(|f| f.rmse).collect();
            let m = mean(&rm);
            let sd = (rm.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (rm.len() as f64 - 1.0).max(1.0)).sqrt();
            let r2s: Vec<f64> = fs.iter().filter_map(|f| f.r2).collect();
            let r2ss: Vec<f64> = fs.iter().filter_map(|f| f.r2_ss).collect();
            Summary {
                label: l.clone(),
                family: fs[0].family,
                mean_rmse: m,
                sd_rmse: sd,
                mean_mae: mean(&fs.iter().map(|f| f.mae).collect::<Vec<_>>()),
                mean_r2: (!r2s.is_empty()).then(|| mean(&r2s)),
                mean_r2_ss: (!r2ss.is_empty()).then(|| mean(&r2ss)),
                r2_missing: fs.len() - r2s.len(),
            }
        })
        .collect()
}

/// Winner by lowest mean RMSE (declaration order breaks ties) and
/// BH-adjusted pairwise rank-sum tests on per-fold RMSE.
pub fn compare_models(labels: &[String], folds: &[FoldResult]) -> Result<Comparison> {
    if labels.len() < 2 {
        return Err(Error::invalid("comparison needs at least two models"));
    }
    let rm: Vec<Vec<f64>> = labels.iter().map(|l| fold_rmses(folds, l)).collect();
    let means: Vec<f64> = rm.iter().map(|v| mean(v)).collect();
    let mut winner = 0;
    for (i, m) in means.iter().enumerate() {
        if *m < means[winner] {
            winner = i;
        }
    }
    let mut pairs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            raw.push(wilcoxon_rank_sum(&rm[i], &rm[j])?);
            pairs.push((i, j));
        }
    }
    let adj = benjamini_hochberg(&raw)?;
    Ok(Comparison {
        winner: labels[winner].clone(),
        alpha: ALPHA,
        pairs: pairs
            .into_iter()
            .zip(raw.iter().zip(&adj))
            .map(|((i, j), (&p, &q))| PairTest {
                a: labels[i].clone(),
                b: labels[j].clone(),
                p_raw: p,
                p_adjusted: q,
                significant: q < ALPHA,
            })
            .collect(),
    })
}

impl CvReport {
    pub fn summary(&self, label: &str) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    /// Out-of-fold predictions of one repeat, in row order.
    pub fn oof_predictions(&self, label: &str, repeat: usize) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; self.n];
        for f in self.folds.iter().filter(|f| f.label == label && f.repeat == repeat) {
            for (&i, &p) in f.test_rows.iter().zip(&f.predictions) {
                out[i] = p;
            }
        }
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid(format!("no complete repeat {repeat} for {label}")));
        }
        Ok(out)
    }

    /// Moran's I permutation test on the out-of-fold residuals of `repeat`
    /// for every model, stored in `residual_diagnostics`.
    pub fn add_residual_diagnostics(
        &mut self,
        y: &[f64],
        w: &crate::spatialstats::WeightMatrix,
        repeat: usize,
        n_perm: usize,
        seed: u64,
    ) -> Result<()> {
        let mut out = Vec::new();
        for label in &self.labels {
            let pred = self.oof_predictions(label, repeat)?;
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            out.push(crate::spatialstats::ResidualDiagnostic {
                label: label.clone(),
                repeat,
                moran: crate::spatialstats::permutation_test(&resid, w, n_perm, seed)?,
            });
        }
        self.residual_diagnostics = out;
        Ok(())
    }
}
