use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polyline_distance, BBox, Polygon, Pt};

/// Road classes understood by the road-based predictors.
pub const ROAD_CLASSES: [&str; 6] = [
    "motorway",
    "primary",
    "secondary",
    "tertiary",
    "residential",
    "footway",
];

/// Urban Atlas 2018 nomenclature codes.
pub const URBAN_ATLAS_CODES: [&str; 27] = [
    "11100", "11210", "11220", "11230", "11240", "11300", "12100", "12210", "12220", "12230",
    "12300", "12400", "13100", "13300", "13400", "14100", "14200", "21000", "22000", "23000",
    "24000", "25000", "31000", "32000", "33000", "40000", "50000",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Polyline,
    Polygon,
    Point,
    Raster,
}

/// Accepted class tags for a vector layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vocabulary {
    Roads,
    UrbanAtlas,
    /// Any tag, including a missing class property.
    Any,
}

impl Vocabulary {
    pub fn accepts(&self, tag: &str) -> bool {
        match self {
            Vocabulary::Roads => ROAD_CLASSES.contains(&tag),
            Vocabulary::UrbanAtlas => URBAN_ATLAS_CODES.contains(&tag),
            Vocabulary::Any => true,
        }
    }
}

/// Class filter applied to vector features. An empty `Only` set matches
/// nothing; `All` matches every feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    All,
    Only(BTreeSet<String>),
}

impl ClassFilter {
    pub fn only<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ClassFilter::Only(tags.into_iter().map(Into::into).collect())
    }

    pub fn matches(&self, tag: &str) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Only(set) => set.contains(tag),
        }
    }
}

impl std::fmt::Display for ClassFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassFilter::All => write!(f, "*"),
            ClassFilter::Only(set) => {
                let v: Vec<&str> = set.iter().map(String::as_str).collect();
                write!(f, "{{{}}}", v.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Point(Pt),
    Polyline(Vec<Pt>),
    Polygon(Polygon),
}

impl Geometry {
    pub fn kind(&self) -> LayerKind {
        match self {
            Geometry::Point(_) => LayerKind::Point,
            Geometry::Polyline(_) => LayerKind::Polyline,
            Geometry::Polygon(_) => LayerKind::Polygon,
        }
    }

    /// Exact Euclidean distance; zero on the geometry or inside a polygon.
    pub fn distance(&self, p: Pt) -> f64 {
        match self {
            Geometry::Point(q) => p.dist(*q),
            Geometry::Polyline(line) => polyline_distance(p, line),
            Geometry::Polygon(poly) => poly.distance(p),
        }
    }

    pub fn bbox(&self) -> BBox {
        match self {
            Geometry::Point(q) => BBox { min: *q, max: *q },
            Geometry::Polyline(line) => BBox::of_points(line).expect("non-empty polyline"),
            Geometry::Polygon(poly) => poly.bbox(),
        }
    }

    fn points(&self) -> Box<dyn Iterator<Item = &Pt> + '_> {
        match self {
            Geometry::Point(q) => Box::new(std::iter::once(q)),
            Geometry::Polyline(line) => Box::new(line.iter()),
            Geometry::Polygon(poly) => Box::new(poly.rings().flatten()),
        }
    }

    /// Check the geometry invariants: finite coordinates, nonzero-length
    /// polyline segments, closed polygon rings with at least three vertices.
    pub fn validate(&self) -> Result<()> {
        if !self.points().all(|p| p.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        match self {
            Geometry::Point(_) => Ok(()),
            Geometry::Polyline(line) => {
                if line.len() < 2 {
                    return Err(Error::invalid("polyline with fewer than two vertices"));
                }
                if line.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::invalid("zero-length polyline segment"));
                }
                Ok(())
            }
            Geometry::Polygon(poly) => {
                for ring in poly.rings() {
                    if ring.len() < 4 || ring.first() != ring.last() {
                        return Err(Error::invalid("polygon ring not closed"));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFeature {
    pub geometry: Geometry,
    pub class_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorLayer {
    pub kind: LayerKind,
    pub features: Vec<VectorFeature>,
    /// Declared CRS name, if the source carried one.
    pub crs: Option<String>,
}

impl VectorLayer {
    pub fn new(kind: LayerKind, features: Vec<VectorFeature>) -> Result<Self> {
        if kind == LayerKind::Raster {
            return Err(Error::invalid("vector layer cannot have raster kind"));
        }
        for (i, f) in features.iter().enumerate() {
            if f.geometry.kind() != kind {
                return Err(Error::invalid(format!(
                    "feature {i} is {:?}, layer is {kind:?}",
                    f.geometry.kind()
                )));
            }
            f.geometry
                .validate()
                .map_err(|e| Error::invalid(format!("feature {i}: {e}")))?;
        }
        Ok(Self {
            kind,
            features,
            crs: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn count_matching(&self, filter: &ClassFilter) -> usize {
        self.features
            .iter()
            .filter(|f| filter.matches(&f.class_tag))
            .count()
    }

    pub fn bbox(&self) -> Option<BBox> {
        let boxes: Vec<BBox> = self.features.iter().map(|f| f.geometry.bbox()).collect();
        let corners: Vec<Pt> = boxes.iter().flat_map(|b| [b.min, b.max]).collect();
        BBox::of_points(&corners)
    }
}

/// Regular grid of cell values. Row 0 is the northern-most row; `origin`
/// is the lower-left corner of the grid. No-data cells hold NaN.
#[derive(Debug, Clone)]
pub struct Raster {
    pub origin: Pt,
    pub cell_size: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    values: Vec<f64>,
    // per-row prefix sums (n_cols + 1 entries per row) of valid values and counts
    row_sum: Vec<f64>,
    row_count: Vec<u32>,
}

impl Raster {
    pub fn new(origin: Pt, cell_size: f64, n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid(format!("raster cell size {cell_size} must be > 0")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("raster origin not finite"));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::invalid(format!(
                "raster has {} values, header declares {n_rows}x{n_cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::invalid("raster value is infinite"));
        }
        let w = n_cols + 1;
        let mut row_sum = vec![0.0; n_rows * w];
        let mut row_count = vec![0u32; n_rows * w];
        for r in 0..n_rows {
            for c in 0..n_cols {
                let v = values[r * n_cols + c];
                let (s, k) = if v.is_nan() { (0.0, 0) } else { (v, 1) };
                row_sum[r * w + c + 1] = row_sum[r * w + c] + s;
                row_count[r * w + c + 1] = row_count[r * w + c] + k;
            }
        }
        Ok(Self {
            origin,
            cell_size,
            n_rows,
            n_cols,
            values,
            row_sum,
            row_count,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell value, `None` for no-data.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.values[row * self.n_cols + col];
        (!v.is_nan()).then_some(v)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Pt {
        Pt::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + ((self.n_rows - row) as f64 - 0.5) * self.cell_size,
        )
    }

    /// Cell containing `p`, if inside the raster extent.
    pub fn cell_of(&self, p: Pt) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.cell_size).floor();
        let r_from_bottom = ((p.y - self.origin.y) / self.cell_size).floor();
        if c < 0.0 || r_from_bottom < 0.0 {
            return None;
        }
        let (c, rb) = (c as usize, r_from_bottom as usize);
        if c >= self.n_cols || rb >= self.n_rows {
            return None;
        }
        Some((self.n_rows - 1 - rb, c))
    }

    pub fn bbox(&self) -> BBox {
        BBox {
            min: self.origin,
            max: Pt::new(
                self.origin.x + self.n_cols as f64 * self.cell_size,
                self.origin.y + self.n_rows as f64 * self.cell_size,
            ),
        }
    }

    /// Sum and count of valid cells whose centers lie strictly inside the
    /// disk of radius `r` around `c`.
    pub fn disk_sum_count(&self, c: Pt, r: f64) -> (f64, u64) {
        if self.n_rows == 0 || self.n_cols == 0 || r <= 0.0 {
            return (0.0, 0);
        }
        let cs = self.cell_size;
        let r2 = r * r;
        let inside = |row: usize, col: usize| self.cell_center(row, col).dist2(c) < r2;
        let w = self.n_cols + 1;
        let top = self.origin.y + self.n_rows as f64 * cs;
        // rows whose center y lies within (c.y - r, c.y + r), padded by one
        let row_lo = (((top - (c.y + r)) / cs) - 1.5).floor().max(0.0) as usize;
        let row_hi = ((((top - (c.y - r)) / cs) + 0.5).ceil().max(0.0) as usize).min(self.n_rows - 1);
        let mut sum = 0.0;
        let mut count = 0u64;
        for row in row_lo..=row_hi {
            let yc = self.cell_center(row, 0).y;
            let dy = yc - c.y;
            let rem = r2 - dy * dy;
            if rem <= 0.0 {
                continue;
            }
            let half = rem.sqrt();
            let t_lo = (c.x - half - self.origin.x) / cs - 0.5;
            let t_hi = (c.x + half - self.origin.x) / cs - 0.5;
            if t_hi < -1.0 || t_lo > self.n_cols as f64 {
                continue;
            }
            let max_col = self.n_cols as i64 - 1;
            let mut lo = (t_lo.floor() as i64 + 1).clamp(0, max_col);
            let mut hi = (t_hi.ceil() as i64 - 1).clamp(0, max_col);
            // snap both ends onto the exact membership predicate
            while lo > 0 && inside(row, (lo - 1) as usize) {
                lo -= 1;
            }
            while lo <= hi && !inside(row, lo as usize) {
                lo += 1;
            }
            while hi < max_col && inside(row, (hi + 1) as usize) {
                hi += 1;
            }
            while hi >= lo && !inside(row, hi as usize) {
                hi -= 1;
            }
            if hi < lo {
                continue;
            }
            let (lo, hi) = (lo as usize, hi as usize);
            sum += self.row_sum[row * w + hi + 1] - self.row_sum[row * w + lo];
            count += u64::from(self.row_count[row * w + hi + 1] - self.row_count[row * w + lo]);
        }
        (sum, count)
    }
}

impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.cell_size == other.cell_size
            && self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

/// Any input layer: class-tagged vectors or a raster grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoLayer {
    Vector(VectorLayer),
    Raster(Raster),
}

impl GeoLayer {
    pub fn kind(&self) -> LayerKind {
        match self {
            GeoLayer::Vector(v) => v.kind,
            GeoLayer::Raster(_) => LayerKind::Raster,
        }
    }

    pub fn as_vector(&self) -> Option<&VectorLayer> {
        match self {
            GeoLayer::Vector(v) => Some(v),
            GeoLayer::Raster(_) => None,
        }
    }

    pub fn as_raster(&self) -> Option<&Raster> {
        match self {
            GeoLayer::Raster(r) => Some(r),
            GeoLayer::Vector(_) => None,
        }
    }
}
