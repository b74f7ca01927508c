use std::path::Path;

use geojson::{FeatureCollection, JsonObject, JsonValue};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{column_units, validate_specs, warm_indexes, FeatureEngine, PredictorSpec};
use crate::geodata::{feature, format_ascii_grid, parse_ascii_grid, Geometry, LayerSet, Raster, RasterRole, DEFAULT_NODATA};
use crate::geometry::{Polygon, Pt};
use crate::matrix::Matrix;
use crate::models::TrainedModel;

pub const DEFAULT_CELL_SIZE: f64 = 50.0;
/// Largest share of unmasked cells allowed to fail feature extraction.
pub const MAX_FAILED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: usize,
    pub reason: String,
}

/// Regular prediction grid. Cells are stored row-major with row 0 at the
/// north edge, like [`Raster`]; `origin` is the lower-left corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub city: String,
    pub cell_size: f64,
    pub origin: Pt,
    pub n_rows: usize,
    pub n_cols: usize,
    /// true where the cell centroid lies inside the boundary.
    pub inside: Vec<bool>,
    /// dB(A) per cell; `None` outside the boundary, before prediction, or
    /// where extraction failed.
    pub values: Vec<Option<f64>>,
    pub failures: Vec<CellFailure>,
}

impl NoiseGrid {
    pub fn n_cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn centroid(&self, cell: usize) -> Pt {
        let (r, c) = (cell / self.n_cols, cell % self.n_cols);
        Pt::new(
            self.origin.x + (c as f64 + 0.5) * self.cell_size,
            self.origin.y + ((self.n_rows - r) as f64 - 0.5) * self.cell_size,
        )
    }

    /// Index of the cell containing `p`, if within the grid extent.
    pub fn cell_of(&self, p: Pt) -> Option<usize> {
        let c = ((p.x - self.origin.x) / self.cell_size).floor();
        let rb = ((p.y - self.origin.y) / self.cell_size).floor();
        if c < 0.0 || rb < 0.0 || c >= self.n_cols as f64 || rb >= self.n_rows as f64 {
            return None;
        }
        Some((self.n_rows - 1 - rb as usize) * self.n_cols + c as usize)
    }

    pub fn unmasked(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cells()).filter(|&i| self.inside[i])
    }

    pub fn cell_polygon(&self, cell: usize) -> Polygon {
        let c = self.centroid(cell);
        let h = self.cell_size / 2.0;
        Polygon::new(vec![
            Pt::new(c.x - h, c.y - h),
            Pt::new(c.x + h, c.y - h),
            Pt::new(c.x + h, c.y + h),
            Pt::new(c.x - h, c.y + h),
        ])
    }

    /// Predictions as a raster (NaN where no value).
    pub fn to_raster(&self) -> Result<Raster> {
        Raster::new(
            self.origin,
            self.cell_size,
            self.n_rows,
            self.n_cols,
            self.values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        )
    }

    pub fn to_ascii_grid(&self) -> Result<String> {
        Ok(format_ascii_grid(&self.to_raster()?, DEFAULT_NODATA))
    }

    /// Cells with a predicted value as polygons carrying a `laeq` attribute.
    pub fn to_geojson(&self) -> FeatureCollection {
        let features = (0..self.n_cells())
            .filter_map(|i| self.values[i].map(|v| (i, v)))
            .map(|(i, v)| {
                let mut props = JsonObject::new();
                props.insert("city".into(), JsonValue::String(self.city.clone()));
                props.insert("cell".into(), JsonValue::from(i));
                props.insert("laeq".into(), JsonValue::from(v));
                feature(&Geometry::Polygon(self.cell_polygon(i)), props)
            })
            .collect();
        FeatureCollection {
            bbox: None,
            features,
            foreign_members: None,
        }
    }

    pub fn export(&self, path: impl AsRef<Path>, format: &str) -> Result<()> {
        let path = path.as_ref();
        let text = match format.to_ascii_lowercase().as_str() {
            "asc" | "ascii" => self.to_ascii_grid()?,
            "geojson" => serde_json::to_string(&self.to_geojson())?,
            other => return Err(Error::invalid(format!("unknown grid export format {other:?}"))),
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Read an exported ASCII grid back as a raster.
pub fn import_ascii_grid(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, RasterRole::Generic)
}

/// Grid over the bounding box of `boundary`; cells whose centroid is outside
/// the boundary are masked.
pub fn make_grid(city: &str, boundary: &Polygon, cell_size: f64) -> Result<NoiseGrid> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::invalid(format!("cell size {cell_size} must be > 0")));
    }
    if boundary.exterior.len() < 4 || !(boundary.area() > 0.0) {
        return Err(Error::invalid(format!("boundary of {city} has zero area")));
    }
    let bb = boundary.bbox();
    let n_cols = ((bb.width() / cell_size).ceil() as usize).max(1);
    let n_rows = ((bb.height() / cell_size).ceil() as usize).max(1);
    let mut grid = NoiseGrid {
        city: city.to_string(),
        cell_size,
        origin: bb.min,
        n_rows,
        n_cols,
        inside: Vec::new(),
        values: vec![None; n_rows * n_cols],
        failures: Vec::new(),
    };
    grid.inside = (0..grid.n_cells()).map(|i| boundary.contains(grid.centroid(i))).collect();
    Ok(grid)
}

/// Evaluate `specs` at every unmasked centroid and predict with `model`.
///
/// Cells whose extraction or prediction fails stay empty and are listed in
/// `failures`; more than 5% failures is an error.
pub fn predict_grid(
    model: &TrainedModel,
    grid: &NoiseGrid,
    layers: &LayerSet,
    specs: &[PredictorSpec],
    distance_ceiling: f64,
) -> Result<NoiseGrid> {
    validate_specs(specs)?;
    let engine = FeatureEngine::new(layers, distance_ceiling);
    warm_indexes(&engine, specs)?;
    let (names, _) = column_units(specs);
    let cells: Vec<usize> = grid.unmasked().collect();
    let rows: Vec<Result<Vec<f64>>> = cells
        .par_iter()
        .map(|&i| engine.row(specs, &format!("{}:{i}", grid.city), grid.centroid(i)))
        .collect();
    let mut out = grid.clone();
    out.values = vec![None; grid.n_cells()];
    out.failures.clear();
    let mut ok_cells = Vec::new();
    let mut ok_rows = Vec::new();
    for (&i, r) in cells.iter().zip(rows) {
        match r {
            Ok(v) => {
                ok_cells.push(i);
                ok_rows.push(v);
            }
            Err(e) => out.failures.push(CellFailure {
                cell: i,
                reason: e.to_string(),
            }),
        }
    }
    if !ok_rows.is_empty() {
        let x = Matrix::from_rows(&ok_rows)?;
        let pred = model.predict(&x, &names)?;
        for (&i, p) in ok_cells.iter().zip(pred) {
            if p.is_finite() {
                out.values[i] = Some(p);
            } else {
                out.failures.push(CellFailure {
                    cell: i,
                    reason: "non-finite prediction".into(),
                });
            }
        }
    }
    out.failures.sort_by_key(|f| f.cell);
    for f in &out.failures {
        log::warn!("{} cell {} masked: {}", grid.city, f.cell, f.reason);
    }
    if !cells.is_empty() && out.failures.len() as f64 > MAX_FAILED_FRACTION * cells.len() as f64 {
        return Err(Error::Numerical(format!(
            "{}: {} of {} cells failed (limit {}%)",
            grid.city,
            out.failures.len(),
            cells.len(),
            MAX_FAILED_FRACTION * 100.0
        )));
    }
    Ok(out)
}
