//! ESRI ASCII grid reading and writing.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::Raster;
use crate::error::{Error, Result};
use crate::geometry::Pt;

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Semantic role of a raster, used for value-range validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RasterRole {
    #[default]
    Generic,
    /// Sealed-surface fraction, values in [0, 1].
    Imperviousness,
    /// Residents per cell, values >= 0.
    Population,
}

pub fn load_raster(path: impl AsRef<Path>, role: RasterRole) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ascii_grid(&text, role).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn parse_ascii_grid(text: &str, role: RasterRole) -> Result<Raster> {
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut centered = false;
    let mut cellsize = None;
    let mut nodata = None;
    while let Some(&tok) = tokens.peek() {
        if !tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            break;
        }
        let key = tokens.next().unwrap().to_ascii_lowercase();
        let val = tokens
            .next()
            .ok_or_else(|| Error::invalid(format!("header {key} has no value")))?;
        let num: f64 = val
            .parse()
            .map_err(|_| Error::invalid(format!("header {key} value {val:?} is not numeric")))?;
        match key.as_str() {
            "ncols" => ncols = Some(num),
            "nrows" => nrows = Some(num),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                centered = true;
            }
            "yllcenter" => {
                yll = Some(num);
                centered = true;
            }
            "cellsize" => cellsize = Some(num),
            "nodata_value" => nodata = Some(num),
            other => return Err(Error::invalid(format!("unknown header keyword {other}"))),
        }
    }
    let need = |v: Option<f64>, k: &str| v.ok_or_else(|| Error::invalid(format!("missing header {k}")));
    let ncols = need(ncols, "ncols")?;
    let nrows = need(nrows, "nrows")?;
    let cellsize = need(cellsize, "cellsize")?;
    let (mut xll, mut yll) = (need(xll, "xllcorner")?, need(yll, "yllcorner")?);
    if centered {
        xll -= cellsize / 2.0;
        yll -= cellsize / 2.0;
    }
    if ncols < 0.0 || nrows < 0.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(Error::invalid("ncols/nrows must be non-negative integers"));
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);

    let mut values = Vec::with_capacity(ncols * nrows);
    for tok in tokens {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::invalid(format!("non-numeric cell value {tok:?}")))?;
        values.push(if Some(v) == nodata { f64::NAN } else { v });
    }
    if values.len() != ncols * nrows {
        return Err(Error::invalid(format!(
            "header declares {nrows}x{ncols} = {} cells, found {}",
            ncols * nrows,
            values.len()
        )));
    }
    validate_role(&values, role)?;
    Raster::new(Pt::new(xll, yll), cellsize, nrows, ncols, values)
}

pub fn validate_role(values: &[f64], role: RasterRole) -> Result<()> {
    for (i, v) in values.iter().enumerate().filter(|(_, v)| !v.is_nan()) {
        let ok = match role {
            RasterRole::Generic => v.is_finite(),
            RasterRole::Imperviousness => (0.0..=1.0).contains(v),
            RasterRole::Population => v.is_finite() && *v >= 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "cell {i} value {v} out of range for {role:?} raster"
            )));
        }
    }
    Ok(())
}

/// Serialize a raster; no-data cells are written as `nodata`.
pub fn format_ascii_grid(r: &Raster, nodata: f64) -> String {
    let mut s = String::with_capacity(r.n_rows * r.n_cols * 8 + 128);
    let _ = writeln!(s, "ncols {}", r.n_cols);
    let _ = writeln!(s, "nrows {}", r.n_rows);
    let _ = writeln!(s, "xllcorner {}", r.origin.x);
    let _ = writeln!(s, "yllcorner {}", r.origin.y);
    let _ = writeln!(s, "cellsize {}", r.cell_size);
    let _ = writeln!(s, "NODATA_value {nodata}");
    for row in 0..r.n_rows {
        for col in 0..r.n_cols {
            if col > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{}", r.get(row, col).unwrap_or(nodata));
        }
        s.push('\n');
    }
    s
}

pub fn write_raster(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_ascii_grid(r, DEFAULT_NODATA)).map_err(|e| Error::io(path, e))
}
