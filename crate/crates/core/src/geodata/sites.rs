use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pt;

/// Plausible range for an A-weighted equivalent level, dB(A).
pub const LAEQ_RANGE: (f64, f64) = (20.0, 120.0);

/// A monitoring site with its yearly L_Aeq values and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeasurement {
    pub site_id: String,
    pub city: String,
    pub x: f64,
    pub y: f64,
    pub yearly_laeq: BTreeMap<i32, f64>,
    pub mean_laeq: f64,
    /// Fraction of the file's year columns that carried a value.
    pub coverage: f64,
}

impl SiteMeasurement {
    pub fn new(
        site_id: impl Into<String>,
        city: impl Into<String>,
        x: f64,
        y: f64,
        yearly_laeq: BTreeMap<i32, f64>,
    ) -> Result<Self> {
        let site_id = site_id.into();
        if yearly_laeq.is_empty() {
            return Err(Error::invalid(format!("site {site_id}: no yearly values")));
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!("site {site_id}: non-finite coordinate")));
        }
        for (year, v) in &yearly_laeq {
            if !(v.is_finite() && *v >= LAEQ_RANGE.0 && *v <= LAEQ_RANGE.1) {
                return Err(Error::invalid(format!(
                    "site {site_id}: L_Aeq {v} for {year} outside [{}, {}] dB(A)",
                    LAEQ_RANGE.0, LAEQ_RANGE.1
                )));
            }
        }
        let mean_laeq = mean_of(&yearly_laeq);
        Ok(Self {
            site_id,
            city: city.into(),
            x,
            y,
            yearly_laeq,
            mean_laeq,
            coverage: 1.0,
        })
    }

    pub fn location(&self) -> Pt {
        Pt::new(self.x, self.y)
    }
}

fn mean_of(values: &BTreeMap<i32, f64>) -> f64 {
    values.values().sum::<f64>() / values.len() as f64
}

/// A row that could not be turned into a site.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SiteCollection {
    pub sites: Vec<SiteMeasurement>,
    pub rejected: Vec<RejectedRow>,
    pub years: Vec<i32>,
}

impl SiteCollection {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Load sites from `site_id,city,x,y,laeq_<year>...` CSV.
///
/// Rows with a missing or non-numeric coordinate, an unparsable level or no
/// yearly value at all are rejected with their row number. Duplicate site
/// ids and out-of-range levels fail the whole load.
pub fn load_sites(path: impl AsRef<Path>) -> Result<SiteCollection> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sites(file, &path.display().to_string())
}

pub fn read_sites<R: std::io::Read>(reader: R, label: &str) -> Result<SiteCollection> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(format!("{name} in {label}")))
    };
    let (i_id, i_city, i_x, i_y) = (col("site_id")?, col("city")?, col("x")?, col("y")?);
    let mut year_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(rest) = h.strip_prefix("laeq_") {
            let year: i32 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("{label}: bad year column {h}")))?;
            year_cols.push((i, year));
        }
    }
    if year_cols.is_empty() {
        return Err(Error::MissingColumn(format!("laeq_<year> in {label}")));
    }

    let mut sites = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let coord = |i: usize, name: &str| -> std::result::Result<f64, String> {
            let s = field(i);
            if s.is_empty() {
                return Err(format!("missing {name} coordinate"));
            }
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("non-numeric {name} coordinate {s:?}"))
        };
        let (x, y) = match (coord(i_x, "x"), coord(i_y, "y")) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(m), _) | (_, Err(m)) => {
                rejected.push(RejectedRow { row, message: m });
                continue;
            }
        };
        let mut yearly = BTreeMap::new();
        let mut bad = None;
        for &(i, year) in &year_cols {
            let s = field(i);
            if s.is_empty() {
                continue;
            }
            match s.parse::<f64>() {
                Ok(v) => {
                    yearly.insert(year, v);
                }
                Err(_) => bad = Some(format!("non-numeric level {s:?} for {year}")),
            }
        }
        if let Some(message) = bad {
            rejected.push(RejectedRow { row, message });
            continue;
        }
        if yearly.is_empty() {
            rejected.push(RejectedRow {
                row,
                message: "no yearly level present".into(),
            });
            continue;
        }
        let id = field(i_id).to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Row {
                file: label.to_string(),
                row,
                message: format!("duplicate site_id {id}"),
            });
        }
        let present = yearly.len();
        let mut site = SiteMeasurement::new(id, field(i_city), x, y, yearly).map_err(|e| Error::Row {
            file: label.to_string(),
            row,
            message: e.to_string(),
        })?;
        site.coverage = present as f64 / year_cols.len() as f64;
        sites.push(site);
    }
    for r in &rejected {
        log::warn!("{label}: rejected row {}: {}", r.row, r.message);
    }
    log::info!("{label}: loaded {} sites ({} rejected)", sites.len(), rejected.len());
    Ok(SiteCollection {
        sites,
        rejected,
        years: year_cols.into_iter().map(|(_, y)| y).collect(),
    })
}

/// Write sites in the loader's CSV schema. Years are the union over sites.
pub fn write_sites(path: impl AsRef<Path>, sites: &[SiteMeasurement]) -> Result<()> {
    let path = path.as_ref();
    let years: std::collections::BTreeSet<i32> =
        sites.iter().flat_map(|s| s.yearly_laeq.keys().copied()).collect();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["site_id".to_string(), "city".into(), "x".into(), "y".into()];
    header.extend(years.iter().map(|y| format!("laeq_{y}")));
    w.write_record(&header)?;
    for s in sites {
        let mut rec = vec![s.site_id.clone(), s.city.clone(), s.x.to_string(), s.y.to_string()];
        rec.extend(
            years
                .iter()
                .map(|y| s.yearly_laeq.get(y).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
