//! Regression learners behind a uniform fit/predict interface.
//!
//! Each [`TrainedModel`] carries its fitted preprocessing so it can be applied
//! to raw predictor columns matched by name.

mod gbt;
mod linear;
mod rf;
mod svr;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::{vif_screen, FittedTransform, DEFAULT_VIF_THRESHOLD};

pub use gbt::{fit_gbt, leaf_weight, split_gain, BoostFit, GbtParams};
pub use linear::{adjusted_r2, fit_enet, fit_lm_forward, LinearFit, StepwiseFit, ENET_MAX_SWEEPS, ENET_TOL};
pub use rf::{fit_rf, ForestFit, RfParams};
pub use svr::{fit_svr, fit_svr_weighted, rbf, SvrFit, SvrModel, SvrParams, DEFAULT_SVR_CAP, SVR_TOL};
pub use tree::{Node, RegressionTree, TreeEnsemble};

/// Version tag written into serialized models.
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "LM")]
    Lm,
    #[serde(rename = "ENET")]
    Enet,
    #[serde(rename = "SVR")]
    Svr,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "GBT")]
    Gbt,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Lm, Family::Enet, Family::Svr, Family::Rf, Family::Gbt];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lm => "LM",
            Family::Enet => "ENET",
            Family::Svr => "SVR",
            Family::Rf => "RF",
            Family::Gbt => "GBT",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown model family {s}")))
    }

    /// Preprocessing applied before the learner sees the data.
    pub fn policy(self) -> Policy {
        match self {
            Family::Lm => Policy {
                standardize: true,
                vif_screen: true,
            },
            Family::Enet | Family::Svr => Policy {
                standardize: true,
                vif_screen: false,
            },
            Family::Rf | Family::Gbt => Policy {
                standardize: false,
                vif_screen: false,
            },
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Yeo-Johnson is always applied; standardization and VIF screening vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub standardize: bool,
    pub vif_screen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Hyperparams {
    #[serde(rename = "LM")]
    Lm { selection_limit: usize },
    #[serde(rename = "ENET")]
    Enet { alpha: f64, lambda: f64 },
    #[serde(rename = "SVR")]
    Svr { c: f64, epsilon: f64, gamma: f64 },
    #[serde(rename = "RF")]
    Rf { n_trees: usize, mtry: usize, min_node: usize },
    #[serde(rename = "GBT")]
    Gbt {
        eta: f64,
        max_depth: usize,
        rounds: usize,
        subsample: f64,
        colsample: f64,
        reg_lambda: f64,
        reg_gamma: f64,
    },
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Lm { .. } => Family::Lm,
            Hyperparams::Enet { .. } => Family::Enet,
            Hyperparams::Svr { .. } => Family::Svr,
            Hyperparams::Rf { .. } => Family::Rf,
            Hyperparams::Gbt { .. } => Family::Gbt,
        }
    }

    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Hyperparameter(m));
        match *self {
            Hyperparams::Lm { selection_limit } if selection_limit == 0 => bad("selection_limit must be >= 1".into()),
            Hyperparams::Enet { alpha, lambda } if !(0.0..=1.0).contains(&alpha) || !(lambda >= 0.0) => {
                bad(format!("ENet α={alpha} λ={lambda}"))
            }
            Hyperparams::Svr { c, epsilon, gamma } => SvrParams { c, epsilon, gamma }.validate(),
            Hyperparams::Rf { n_trees, mtry, min_node } if n_trees == 0 || mtry == 0 || min_node == 0 => {
                bad("RF n_trees, mtry and min_node must be >= 1".into())
            }
            Hyperparams::Gbt {
                eta,
                max_depth,
                rounds,
                subsample,
                colsample,
                reg_lambda,
                reg_gamma,
            } => GbtParams {
                eta,
                max_depth,
                rounds,
                subsample,
                colsample,
                reg_lambda,
                reg_gamma,
            }
            .validate(),
            _ => Ok(()),
        }
    }
}

/// Grid axes per family, expanded in declared order (first axis slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub lm_selection_limit: Vec<usize>,
    pub enet_alpha: Vec<f64>,
    pub enet_lambda: Vec<f64>,
    pub svr_c: Vec<f64>,
    pub svr_epsilon: Vec<f64>,
    /// Multiples of 1/d, d = number of predictors.
    pub svr_gamma_per_d: Vec<f64>,
    pub rf_n_trees: usize,
    /// Each entry is a rule applied to d.
    pub rf_mtry: Vec<MtryRule>,
    pub rf_min_node: Vec<usize>,
    pub gbt_eta: Vec<f64>,
    pub gbt_max_depth: Vec<usize>,
    pub gbt_rounds: Vec<usize>,
    pub gbt_subsample: Vec<f64>,
    pub gbt_reg_lambda: Vec<f64>,
    pub gbt_colsample: f64,
    pub gbt_reg_gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtryRule {
    Sqrt,
    Third,
    Half,
}

impl MtryRule {
    pub fn apply(self, d: usize) -> usize {
        let v = match self {
            MtryRule::Sqrt => (d as f64).sqrt().floor() as usize,
            MtryRule::Third => d / 3,
            MtryRule::Half => d / 2,
        };
        v.clamp(1, d.max(1))
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lm_selection_limit: vec![3, 5, 10],
            enet_alpha: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            enet_lambda: (0..7).map(|k| 10f64.powf(-4.0 + 5.0 * k as f64 / 6.0)).collect(),
            svr_c: vec![0.1, 1.0, 10.0, 100.0],
            svr_epsilon: vec![0.1, 0.5, 1.0],
            svr_gamma_per_d: vec![0.5, 1.0, 2.0],
            rf_n_trees: 500,
            rf_mtry: vec![MtryRule::Sqrt, MtryRule::Third, MtryRule::Half],
            rf_min_node: vec![3, 5, 10],
            gbt_eta: vec![0.05, 0.1, 0.3],
            gbt_max_depth: vec![2, 4, 6],
            gbt_rounds: vec![100, 300, 600],
            gbt_subsample: vec![0.7, 1.0],
            gbt_reg_lambda: vec![1.0, 5.0],
            gbt_colsample: 1.0,
            gbt_reg_gamma: 0.0,
        }
    }
}

impl GridSpec {
    /// Expanded grid for one family with `d` predictors.
    pub fn grid(&self, family: Family, d: usize) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        match family {
            Family::Lm => {
                for &selection_limit in &self.lm_selection_limit {
                    out.push(Hyperparams::Lm { selection_limit });
                }
            }
            Family::Enet => {
                for &alpha in &self.enet_alpha {
                    for &lambda in &self.enet_lambda {
                        out.push(Hyperparams::Enet { alpha, lambda });
                    }
                }
            }
            Family::Svr => {
                for &c in &self.svr_c {
                    for &epsilon in &self.svr_epsilon {
                        for &g in &self.svr_gamma_per_d {
                            out.push(Hyperparams::Svr {
                                c,
                                epsilon,
                                gamma: g / d.max(1) as f64,
                            });
                        }
                    }
                }
            }
            Family::Rf => {
                for &rule in &self.rf_mtry {
                    for &min_node in &self.rf_min_node {
                        out.push(Hyperparams::Rf {
                            n_trees: self.rf_n_trees,
                            mtry: rule.apply(d),
                            min_node,
                        });
                    }
                }
            }
            Family::Gbt => {
                for &eta in &self.gbt_eta {
                    for &max_depth in &self.gbt_max_depth {
                        for &rounds in &self.gbt_rounds {
                            for &subsample in &self.gbt_subsample {
                                for &reg_lambda in &self.gbt_reg_lambda {
                                    out.push(Hyperparams::Gbt {
                                        eta,
                                        max_depth,
                                        rounds,
                                        subsample,
                                        colsample: self.gbt_colsample,
                                        reg_lambda,
                                        reg_gamma: self.gbt_reg_gamma,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyperparams: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(hyperparams: Hyperparams, seed: u64) -> Self {
        Self { hyperparams, seed }
    }

    pub fn family(&self) -> Family {
        self.hyperparams.family()
    }
}

/// Fitted learner parameters in transformed-predictor space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fitted {
    Linear(LinearFit),
    Svr(SvrModel),
    Trees(TreeEnsemble),
}

/// Preprocessing fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    /// Input columns, in training order.
    pub feature_names: Vec<String>,
    /// Non-constant input columns passed to the transform.
    pub used_columns: Vec<String>,
    pub transform: FittedTransform,
    /// Positions within `used_columns` retained by VIF screening.
    pub retained: Vec<usize>,
}

impl Pipeline {
    pub fn fit(x: &Matrix, names: &[String], policy: Policy) -> Result<Pipeline> {
        if names.len() != x.n_cols() {
            return Err(Error::ColumnMismatch(format!("{} names for {} columns", names.len(), x.n_cols())));
        }
        let used: Vec<usize> = (0..x.n_cols())
            .filter(|&j| {
                let c = x.column(j);
                c.iter().any(|v| *v != c[0])
            })
            .collect();
        if used.is_empty() {
            return Err(Error::Constant("every predictor is constant in the training rows".into()));
        }
        let used_columns: Vec<String> = used.iter().map(|&j| names[j].clone()).collect();
        let xu = x.select_columns(&used);
        let transform = FittedTransform::fit(&xu, &used_columns, policy.standardize)?;
        let retained = if policy.vif_screen {
            let z = transform.apply(&xu, &used_columns)?;
            vif_screen(&z, DEFAULT_VIF_THRESHOLD)?
        } else {
            (0..used.len()).collect()
        };
        Ok(Pipeline {
            feature_names: names.to_vec(),
            used_columns,
            transform,
            retained,
        })
    }

    /// Transform raw rows (columns located by name) into learner inputs.
    pub fn apply(&self, x: &Matrix, names: &[String]) -> Result<Matrix> {
        let idx: Vec<usize> = self
            .used_columns
            .iter()
            .map(|c| names.iter().position(|n| n == c).ok_or_else(|| Error::MissingColumn(c.clone())))
            .collect::<Result<_>>()?;
        let mut out = Matrix::zeros(x.n_rows(), self.retained.len());
        let mut raw = vec![0.0; idx.len()];
        for i in 0..x.n_rows() {
            let row = x.row(i);
            for (k, &j) in idx.iter().enumerate() {
                raw[k] = row[j];
            }
            let z = self.transform.apply_row(&raw);
            for (k, &r) in self.retained.iter().enumerate() {
                out.set(i, k, z[r]);
            }
        }
        Ok(out)
    }

    /// Names of the learner input columns.
    pub fn learner_columns(&self) -> Vec<String> {
        self.retained.iter().map(|&r| self.used_columns[r].clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub seed: u64,
    pub n_train: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_rmse: Option<f64>,
    /// Learner columns selected by forward stepwise regression.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub family: Family,
    pub hyperparams: Hyperparams,
    pub pipeline: Pipeline,
    pub fitted: Fitted,
    pub info: TrainingInfo,
}

/// Fit preprocessing and the learner on raw predictors.
pub fn fit_model(spec: &ModelSpec, x: &Matrix, names: &[String], y: &[f64]) -> Result<TrainedModel> {
    let pipeline = Pipeline::fit(x, names, spec.family().policy())?;
    fit_with_pipeline(spec, pipeline, x, names, y)
}

/// Fit the learner given an already fitted pipeline (lets callers share one
/// transform fit across many hyperparameter settings).
pub fn fit_with_pipeline(
    spec: &ModelSpec,
    pipeline: Pipeline,
    x: &Matrix,
    names: &[String],
    y: &[f64],
) -> Result<TrainedModel> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid(format!("{} targets for {} rows", y.len(), x.n_rows())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite target"));
    }
    spec.hyperparams.validate()?;
    if spec.family().policy().standardize != pipeline.transform.standardize {
        return Err(Error::invalid("pipeline was fitted for a different preprocessing policy"));
    }
    let z = pipeline.apply(x, names)?;
    let mut info = TrainingInfo {
        seed: spec.seed,
        n_train: x.n_rows(),
        oob_rmse: None,
        selected: vec![],
    };
    let fitted = match spec.hyperparams {
        Hyperparams::Lm { selection_limit } => {
            let limit = selection_limit.min(z.n_cols()).min(z.n_rows().saturating_sub(2));
            let s = fit_lm_forward(&z, y, limit)?;
            let cols = pipeline.learner_columns();
            info.selected = s.selected.iter().map(|&j| cols[j].clone()).collect();
            Fitted::Linear(s.fit)
        }
        Hyperparams::Enet { alpha, lambda } => Fitted::Linear(fit_enet(&z, y, alpha, lambda)?),
        Hyperparams::Svr { c, epsilon, gamma } => {
            Fitted::Svr(fit_svr(&z, y, SvrParams { c, epsilon, gamma }, DEFAULT_SVR_CAP)?.model)
        }
        Hyperparams::Rf { n_trees, mtry, min_node } => {
            let p = RfParams {
                n_trees,
                mtry: mtry.min(z.n_cols()),
                min_node,
                bootstrap: true,
            };
            let f = fit_rf(&z, y, p, spec.seed)?;
            info.oob_rmse = f.oob_rmse;
            Fitted::Trees(f.ensemble)
        }
        Hyperparams::Gbt {
            eta,
            max_depth,
            rounds,
            subsample,
            colsample,
            reg_lambda,
            reg_gamma,
        } => {
            let p = GbtParams {
                eta,
                max_depth,
                rounds,
                subsample,
                colsample,
                reg_lambda,
                reg_gamma,
            };
            Fitted::Trees(fit_gbt(&z, y, p, spec.seed)?.ensemble)
        }
    };
    Ok(TrainedModel {
        version: ARTIFACT_VERSION,
        family: spec.family(),
        hyperparams: spec.hyperparams.clone(),
        pipeline,
        fitted,
        info,
    })
}

impl TrainedModel {
    /// Predict one already-transformed row.
    pub fn predict_transformed(&self, z: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Linear(l) => l.predict_row(z),
            Fitted::Svr(s) => s.predict_row(z),
            Fitted::Trees(t) => t.predict_row(z),
        }
    }

    /// Predict raw rows; columns are matched by name.
    pub fn predict(&self, x: &Matrix, names: &[String]) -> Result<Vec<f64>> {
        let z = self.pipeline.apply(x, names)?;
        let out: Vec<f64> = z.rows().map(|r| self.predict_transformed(r)).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite prediction for row {i}")));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.version != ARTIFACT_VERSION {
            return Err(Error::Unsupported(format!(
                "model artifact version {} (expected {ARTIFACT_VERSION})",
                m.version
            )));
        }
        if let Fitted::Trees(e) = &m.fitted {
            for t in &e.trees {
                t.validate(m.pipeline.retained.len())?;
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
