use std::path::Path;

use super::cv::CvReport;
use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finish(w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    let mut w = w;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report_json(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<CvReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One row per (model, repeat, fold).
pub fn write_fold_metrics_csv(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "family", "repeat", "fold", "rmse", "mae", "r2", "r2_ss", "grid_index", "hyperparams"])?;
    for f in &report.folds {
        w.write_record([
            f.label.clone(),
            f.family.to_string(),
            f.repeat.to_string(),
            f.fold.to_string(),
            f.rmse.to_string(),
            f.mae.to_string(),
            opt(f.r2),
            opt(f.r2_ss),
            f.grid_index.to_string(),
            serde_json::to_string(&f.hyperparams)?,
        ])?;
    }
    finish(w, path)
}

pub fn write_city_metrics_csv(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "repeat", "fold", "city", "n", "rmse", "mae"])?;
    for f in &report.folds {
        for c in &f.per_city {
            w.write_record([
                f.label.clone(),
                f.repeat.to_string(),
                f.fold.to_string(),
                c.city.clone(),
                c.n.to_string(),
                c.rmse.to_string(),
                c.mae.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn write_pairwise_csv(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model_a", "model_b", "p_raw", "p_adjusted", "significant"])?;
    if let Some(c) = &report.comparison {
        for p in &c.pairs {
            w.write_record([
                p.a.clone(),
                p.b.clone(),
                p.p_raw.to_string(),
                p.p_adjusted.to_string(),
                p.significant.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Long-format (model, metric, value) rows for per-fold boxplots.
pub fn write_plot_data_csv(report: &CvReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "metric", "value"])?;
    for f in &report.folds {
        w.write_record([f.label.as_str(), "RMSE", &f.rmse.to_string()])?;
        w.write_record([f.label.as_str(), "MAE", &f.mae.to_string()])?;
        if let Some(r) = f.r2 {
            w.write_record([f.label.as_str(), "R2", &r.to_string()])?;
        }
    }
    finish(w, path)
}
