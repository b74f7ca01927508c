use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::NoiseGrid;
use crate::error::{Error, Result};
use crate::geodata::Raster;

/// Lower band edges in dB(A): >40, >45, ..., >70.
pub const DEFAULT_THRESHOLDS: [f64; 7] = [40.0, 45.0, 50.0, 55.0, 60.0, 65.0, 70.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRow {
    pub threshold: f64,
    pub population: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupExposure {
    pub total_population: f64,
    pub rows: Vec<ExposureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureTable {
    pub thresholds: Vec<f64>,
    pub total: GroupExposure,
    pub cities: BTreeMap<String, GroupExposure>,
    /// Population that fell outside the grid, in masked cells or in cells
    /// without a prediction.
    pub unassigned_population: f64,
}

/// Population per grid cell: each population-raster cell goes to the grid
/// cell containing its centroid (the nearest grid centroid).
pub fn assign_population(grid: &NoiseGrid, population: &Raster) -> (Vec<f64>, f64) {
    let mut per_cell = vec![0.0; grid.n_cells()];
    let mut lost = 0.0;
    for r in 0..population.n_rows {
        for c in 0..population.n_cols {
            let Some(v) = population.get(r, c) else { continue };
            match grid.cell_of(population.cell_center(r, c)) {
                Some(i) if grid.values[i].is_some() => per_cell[i] += v,
                _ => lost += v,
            }
        }
    }
    (per_cell, lost)
}

fn group(values: &[(f64, f64)], thresholds: &[f64]) -> GroupExposure {
    let total = values.iter().fold(0.0, |acc, v| acc + v.1);
    let rows = thresholds
        .iter()
        .map(|&t| {
            let population = values.iter().filter(|v| v.0 > t).fold(0.0, |acc, v| acc + v.1);
            ExposureRow {
                threshold: t,
                population,
                percent: if total > 0.0 { population / total * 100.0 } else { 0.0 },
            }
        })
        .collect();
    GroupExposure {
        total_population: total,
        rows,
    }
}

/// Population living in cells predicted strictly above each threshold, over
/// all cities and per city.
pub fn exposure_table(cities: &[(&NoiseGrid, &Raster)], thresholds: &[f64]) -> Result<ExposureTable> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("thresholds must be finite and non-empty"));
    }
    let mut all = Vec::new();
    let mut per_city: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut unassigned = 0.0;
    for (grid, pop) in cities {
        let (cells, lost) = assign_population(grid, pop);
        unassigned += lost;
        let entry = per_city.entry(grid.city.clone()).or_default();
        for (i, p) in cells.into_iter().enumerate() {
            if let Some(v) = grid.values[i] {
                entry.push((v, p));
                all.push((v, p));
            }
        }
    }
    let total = group(&all, thresholds);
    if !(total.total_population > 0.0) {
        return Err(Error::invalid("total gridded population is zero"));
    }
    Ok(ExposureTable {
        thresholds: thresholds.to_vec(),
        total,
        cities: per_city.into_iter().map(|(c, v)| (c, group(&v, thresholds))).collect(),
        unassigned_population: unassigned,
    })
}

/// One row per threshold: total count and percent, then per-city pairs.
pub fn write_exposure_csv(t: &ExposureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["threshold".to_string(), "total_population".into(), "total_percent".into()];
    for c in t.cities.keys() {
        header.push(format!("{c}_population"));
        header.push(format!("{c}_percent"));
    }
    w.write_record(&header)?;
    for (k, th) in t.thresholds.iter().enumerate() {
        let mut rec = vec![format!(">{th}"), t.total.rows[k].population.to_string(), t.total.rows[k].percent.to_string()];
        for g in t.cities.values() {
            rec.push(g.rows[k].population.to_string());
            rec.push(g.rows[k].percent.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Polygon, Pt};
    use crate::mapping::make_grid;

    #[test]
    fn uniform_sixty() {
        let sq = Polygon::new(vec![Pt::new(0.0, 0.0), Pt::new(100.0, 0.0), Pt::new(100.0, 100.0), Pt::new(0.0, 100.0)]);
        let mut g = make_grid("a", &sq, 50.0).unwrap();
        g.values = vec![Some(60.0); 4];
        let pop = Raster::new(Pt::new(0.0, 0.0), 50.0, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = exposure_table(&[(&g, &pop)], &DEFAULT_THRESHOLDS).unwrap();
        let pct: Vec<f64> = t.total.rows.iter().map(|r| r.percent).collect();
        assert_eq!(pct, vec![100.0, 100.0, 100.0, 100.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.total.total_population, 10.0);
        let zero = Raster::new(Pt::new(0.0, 0.0), 50.0, 2, 2, vec![0.0; 4]).unwrap();
        assert!(exposure_table(&[(&g, &zero)], &DEFAULT_THRESHOLDS).is_err());
    }
}
