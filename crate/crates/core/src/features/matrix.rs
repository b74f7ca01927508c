use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::extract::{warm_indexes, FeatureEngine};
use super::spec::{validate_specs, Axis, PredictorKind, PredictorSpec, Unit};
use crate::error::{Error, Result};
use crate::geodata::LayerSet;
use crate::geometry::Pt;
use crate::matrix::Matrix;

/// Default ceiling (m) for distance predictors.
pub const DEFAULT_DISTANCE_CEILING: f64 = 10_000.0;

/// A location at which predictors are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self { id: id.into(), x, y }
    }

    pub fn pt(&self) -> Pt {
        Pt::new(self.x, self.y)
    }
}

/// Predictor values for a set of locations; columns follow the predictor list order
/// with X and Y last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMatrix {
    pub row_ids: Vec<String>,
    pub column_names: Vec<String>,
    pub units: Vec<Unit>,
    pub values: Matrix,
    /// Distance predictors whose class never occurs and were set to the ceiling.
    #[serde(default)]
    pub censored: Vec<String>,
}

impl PredictorMatrix {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.column_index(name)
            .map(|j| self.values.column(j))
            .ok_or_else(|| Error::MissingColumn(name.into()))
    }

    pub fn select_rows(&self, idx: &[usize]) -> PredictorMatrix {
        PredictorMatrix {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            column_names: self.column_names.clone(),
            units: self.units.clone(),
            values: self.values.select_rows(idx),
            censored: self.censored.clone(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.row_ids.iter().zip(self.values.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Column names and units of a matrix built from `specs` (X and Y last).
pub fn column_units(specs: &[PredictorSpec]) -> (Vec<String>, Vec<Unit>) {
    let mut names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let mut units: Vec<Unit> = specs.iter().map(|s| s.kind.unit()).collect();
    names.extend(["X".to_string(), "Y".to_string()]);
    units.extend([
        PredictorKind::Coordinate(Axis::X).unit(),
        PredictorKind::Coordinate(Axis::Y).unit(),
    ]);
    (names, units)
}

/// Evaluate `specs` at every location. Rows are computed in parallel; any
/// failure aborts with the offending location and predictor.
pub fn build_predictor_matrix(
    locations: &[Location],
    specs: &[PredictorSpec],
    layers: &LayerSet,
    distance_ceiling: f64,
) -> Result<PredictorMatrix> {
    validate_specs(specs)?;
    if !(distance_ceiling > 0.0) {
        return Err(Error::invalid("distance ceiling must be > 0"));
    }
    for l in locations {
        if !l.pt().is_finite() {
            return Err(Error::invalid(format!("location {} has non-finite coordinates", l.id)));
        }
    }
    let engine = FeatureEngine::new(layers, distance_ceiling);
    warm_indexes(&engine, specs)?;
    let mut censored = Vec::new();
    for s in specs {
        if engine.is_censored(s)? {
            log::warn!("{}: no matching feature, filled with {distance_ceiling} m", s.name);
            censored.push(s.name.clone());
        }
    }
    let rows: Vec<Vec<f64>> = locations
        .par_iter()
        .map(|l| engine.row(specs, &l.id, l.pt()))
        .collect::<Result<_>>()?;
    let (column_names, units) = column_units(specs);
    let values = if rows.is_empty() {
        Matrix::zeros(0, column_names.len())
    } else {
        Matrix::from_rows(&rows)?
    };
    Ok(PredictorMatrix {
        row_ids: locations.iter().map(|l| l.id.clone()).collect(),
        column_names,
        units,
        values,
        censored,
    })
}

/// Content hash of everything that determines a predictor matrix.
pub fn cache_key(
    locations: &[Location],
    specs: &[PredictorSpec],
    layer_hashes: &[(String, String)],
    distance_ceiling: f64,
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(locations)?);
    h.update(serde_json::to_vec(specs)?);
    h.update(serde_json::to_vec(layer_hashes)?);
    h.update(distance_ceiling.to_le_bytes());
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    key: String,
    matrix: PredictorMatrix,
}

/// Load a cached matrix if its stored key equals `key`.
pub fn load_cached(path: impl AsRef<Path>, key: &str) -> Result<Option<PredictorMatrix>> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    match serde_json::from_slice::<CacheFile>(&bytes) {
        Ok(c) if c.key == key => Ok(Some(c.matrix)),
        _ => Ok(None),
    }
}

pub fn store_cached(path: impl AsRef<Path>, key: &str, m: &PredictorMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = serde_json::to_vec(&CacheFile {
        key: key.to_string(),
        matrix: m.clone(),
    })?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
