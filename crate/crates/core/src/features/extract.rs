//! Per-location predictor evaluation.
//!
//! The free functions scan the layer directly and define the semantics;
//! [`FeatureEngine`] answers the same questions through cached spatial
//! indexes and is what matrix assembly uses.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::spec::{Axis, PredictorKind, PredictorSpec};
use crate::error::{Error, Result};
use crate::geodata::{ClassFilter, GeoLayer, Geometry, LayerKind, LayerSet, Raster, SpatialIndex, VectorLayer};
use crate::geometry::{polyline_length_in_disk, Pt};

/// Distance from `p` to the nearest feature passing `filter`.
pub fn distance_to_nearest(p: Pt, layer: &VectorLayer, filter: &ClassFilter) -> Result<f64> {
    layer
        .features
        .iter()
        .filter(|f| filter.matches(&f.class_tag))
        .map(|f| f.geometry.distance(p))
        .reduce(f64::min)
        .ok_or_else(|| Error::NoMatchingFeature {
            layer: format!("{:?}", layer.kind),
            filter: filter.to_string(),
        })
}

/// Total length of matching polylines inside the open disk around `p`.
pub fn length_within_buffer(p: Pt, radius: f64, layer: &VectorLayer, filter: &ClassFilter) -> Result<f64> {
    check_radius(radius)?;
    if layer.kind != LayerKind::Polyline {
        return Err(Error::invalid(format!("length buffer needs a polyline layer, got {:?}", layer.kind)));
    }
    Ok(layer
        .features
        .iter()
        .filter(|f| filter.matches(&f.class_tag))
        .map(|f| match &f.geometry {
            Geometry::Polyline(l) => polyline_length_in_disk(l, p, radius),
            _ => 0.0,
        })
        .sum())
}

/// Number of layer points at distance strictly below `radius`.
pub fn count_within_buffer(p: Pt, radius: f64, layer: &VectorLayer) -> Result<usize> {
    check_radius(radius)?;
    if layer.kind != LayerKind::Point {
        return Err(Error::invalid(format!("count buffer needs a point layer, got {:?}", layer.kind)));
    }
    Ok(layer
        .features
        .iter()
        .filter(|f| f.geometry.distance(p) < radius)
        .count())
}

/// Mean of valid raster cells whose centers lie inside the open disk.
pub fn raster_mean_within_buffer(p: Pt, radius: f64, raster: &Raster) -> Result<f64> {
    check_radius(radius)?;
    let (sum, count) = raster.disk_sum_count(p, radius);
    if count == 0 {
        return Err(Error::invalid(format!(
            "no valid raster cell within {radius} m of ({}, {})",
            p.x, p.y
        )));
    }
    Ok(sum / count as f64)
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("buffer radius {radius} must be > 0")))
    }
}

/// Evaluates predictor specs at points using cached per-filter indexes.
pub struct FeatureEngine<'a> {
    layers: &'a LayerSet,
    distance_ceiling: f64,
    indexes: RwLock<HashMap<(String, ClassFilter), Option<Arc<SpatialIndex>>>>,
}

impl<'a> FeatureEngine<'a> {
    pub fn new(layers: &'a LayerSet, distance_ceiling: f64) -> Self {
        Self {
            layers,
            distance_ceiling,
            indexes: RwLock::new(HashMap::new()),
        }
    }

    pub fn distance_ceiling(&self) -> f64 {
        self.distance_ceiling
    }

    fn vector(&self, name: &str) -> Result<&'a VectorLayer> {
        self.layers
            .get(name)?
            .as_vector()
            .ok_or_else(|| Error::invalid(format!("layer {name} is not a vector layer")))
    }

    fn raster(&self, name: &str) -> Result<&'a Raster> {
        self.layers
            .get(name)?
            .as_raster()
            .ok_or_else(|| Error::invalid(format!("layer {name} is not a raster")))
    }

    /// Index over the features of `layer` matching `filter`; `None` when no
    /// feature matches anywhere in the layer.
    pub fn index(&self, layer: &str, filter: &ClassFilter) -> Result<Option<Arc<SpatialIndex>>> {
        let key = (layer.to_string(), filter.clone());
        if let Some(hit) = self.indexes.read().expect("index cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let v = self.vector(layer)?;
        let built = if v.count_matching(filter) == 0 {
            None
        } else {
            Some(Arc::new(SpatialIndex::build_filtered(v, filter)?))
        };
        let mut cache = self.indexes.write().expect("index cache poisoned");
        Ok(cache.entry(key).or_insert(built).clone())
    }

    /// Whether a distance spec has no matching feature in its whole layer
    /// and is therefore filled with the ceiling.
    pub fn is_censored(&self, spec: &PredictorSpec) -> Result<bool> {
        Ok(spec.kind == PredictorKind::Distance && self.index(&spec.layer, &spec.class_filter)?.is_none())
    }

    pub fn evaluate(&self, spec: &PredictorSpec, p: Pt) -> Result<f64> {
        let radius = || spec.radius.ok_or_else(|| Error::invalid(format!("{} needs a radius", spec.name)));
        match spec.kind {
            PredictorKind::Coordinate(Axis::X) => Ok(p.x),
            PredictorKind::Coordinate(Axis::Y) => Ok(p.y),
            PredictorKind::Distance => {
                let d = match self.index(&spec.layer, &spec.class_filter)? {
                    Some(idx) => idx.nearest(p).map_or(f64::INFINITY, |(_, d)| d),
                    None => f64::INFINITY,
                };
                Ok(d.min(self.distance_ceiling))
            }
            PredictorKind::BufferLength => {
                let r = radius()?;
                check_radius(r)?;
                if self.vector(&spec.layer)?.kind != LayerKind::Polyline {
                    return Err(Error::invalid(format!("{}: layer {} is not a polyline layer", spec.name, spec.layer)));
                }
                let Some(idx) = self.index(&spec.layer, &spec.class_filter)? else {
                    return Ok(0.0);
                };
                Ok(idx
                    .within_circle(p, r)
                    .into_iter()
                    .map(|fid| match &self.vector(&spec.layer).map(|v| &v.features[fid].geometry) {
                        Ok(Geometry::Polyline(l)) => polyline_length_in_disk(l, p, r),
                        _ => 0.0,
                    })
                    .sum())
            }
            PredictorKind::BufferCount => {
                let r = radius()?;
                check_radius(r)?;
                if self.vector(&spec.layer)?.kind != LayerKind::Point {
                    return Err(Error::invalid(format!("{}: layer {} is not a point layer", spec.name, spec.layer)));
                }
                Ok(self
                    .index(&spec.layer, &spec.class_filter)?
                    .map_or(0, |idx| idx.within_circle(p, r).len()) as f64)
            }
            PredictorKind::BufferRasterMean => raster_mean_within_buffer(p, radius()?, self.raster(&spec.layer)?),
        }
    }

    /// Evaluate every spec at `p`, followed by the X and Y coordinates.
    pub fn row(&self, specs: &[PredictorSpec], id: &str, p: Pt) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(specs.len() + 2);
        for s in specs {
            let v = self.evaluate(s, p).map_err(|e| Error::Predictor {
                location: id.to_string(),
                predictor: s.name.clone(),
                source: Box::new(e),
            })?;
            out.push(v);
        }
        out.push(p.x);
        out.push(p.y);
        Ok(out)
    }
}

/// Pre-build every index a spec list needs (keeps parallel workers from
/// racing to build the same index).
pub fn warm_indexes(engine: &FeatureEngine<'_>, specs: &[PredictorSpec]) -> Result<()> {
    for s in specs {
        if matches!(s.kind, PredictorKind::Distance | PredictorKind::BufferLength | PredictorKind::BufferCount) {
            if !matches!(engine.layers.get(&s.layer)?, GeoLayer::Vector(_)) {
                return Err(Error::invalid(format!("{}: layer {} is not a vector layer", s.name, s.layer)));
            }
            engine.index(&s.layer, &s.class_filter)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::VectorFeature;
    use crate::geometry::Polygon;

    fn road(a: (f64, f64), b: (f64, f64), tag: &str) -> VectorFeature {
        VectorFeature {
            geometry: Geometry::Polyline(vec![Pt::new(a.0, a.1), Pt::new(b.0, b.1)]),
            class_tag: tag.into(),
        }
    }

    fn roads(fs: Vec<VectorFeature>) -> VectorLayer {
        VectorLayer::new(LayerKind::Polyline, fs).unwrap()
    }

    #[test]
    fn on_road_distance_is_zero() {
        let l = roads(vec![road((-10.0, 0.0), (10.0, 0.0), "primary")]);
        assert_eq!(distance_to_nearest(Pt::new(3.0, 0.0), &l, &ClassFilter::All).unwrap(), 0.0);
    }

    #[test]
    fn endpoint_distance() {
        let l = roads(vec![road((3.0, 4.0), (3.0, 10.0), "primary")]);
        assert_eq!(distance_to_nearest(Pt::new(0.0, 0.0), &l, &ClassFilter::All).unwrap(), 5.0);
    }

    #[test]
    fn inside_polygon_is_zero() {
        let poly = Polygon::new(vec![Pt::new(0.0, 0.0), Pt::new(10.0, 0.0), Pt::new(10.0, 10.0), Pt::new(0.0, 10.0)]);
        let l = VectorLayer::new(
            LayerKind::Polygon,
            vec![VectorFeature {
                geometry: Geometry::Polygon(poly),
                class_tag: "14100".into(),
            }],
        )
        .unwrap();
        assert_eq!(distance_to_nearest(Pt::new(5.0, 5.0), &l, &ClassFilter::All).unwrap(), 0.0);
        assert!((distance_to_nearest(Pt::new(5.0, 12.0), &l, &ClassFilter::All).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_class_names_filter() {
        let l = roads(vec![road((0.0, 0.0), (1.0, 0.0), "primary")]);
        let err = distance_to_nearest(Pt::new(0.0, 0.0), &l, &ClassFilter::only(["motorway"])).unwrap_err();
        assert!(err.to_string().contains("motorway"));
    }

    #[test]
    fn chord_lengths() {
        let l = roads(vec![road((-1000.0, 0.0), (1000.0, 0.0), "primary")]);
        let c = Pt::new(0.0, 0.0);
        assert!((length_within_buffer(c, 50.0, &l, &ClassFilter::All).unwrap() - 100.0).abs() < 1e-9);
        let far = roads(vec![road((100.0, 100.0), (200.0, 100.0), "primary")]);
        assert_eq!(length_within_buffer(c, 50.0, &far, &ClassFilter::All).unwrap(), 0.0);
        let off = roads(vec![road((-1e5, 30.0), (1e5, 30.0), "primary")]);
        assert!((length_within_buffer(c, 50.0, &off, &ClassFilter::All).unwrap() - 80.0).abs() < 1e-9);
    }

    #[test]
    fn strict_count_boundary() {
        let pts: Vec<VectorFeature> = [10.0, 49.9, 50.1]
            .iter()
            .map(|&d| VectorFeature {
                geometry: Geometry::Point(Pt::new(d, 0.0)),
                class_tag: String::new(),
            })
            .collect();
        let l = VectorLayer::new(LayerKind::Point, pts).unwrap();
        assert_eq!(count_within_buffer(Pt::new(0.0, 0.0), 50.0, &l).unwrap(), 2);
    }

    #[test]
    fn empty_point_layer_counts_zero() {
        let l = VectorLayer {
            kind: LayerKind::Point,
            features: vec![],
            crs: None,
        };
        assert_eq!(count_within_buffer(Pt::new(0.0, 0.0), 50.0, &l).unwrap(), 0);
    }

    #[test]
    fn wrong_layer_kinds() {
        let l = roads(vec![road((0.0, 0.0), (1.0, 0.0), "primary")]);
        assert!(count_within_buffer(Pt::new(0.0, 0.0), 50.0, &l).is_err());
        assert!(length_within_buffer(Pt::new(0.0, 0.0), 0.0, &l, &ClassFilter::All).is_err());
    }

    #[test]
    fn raster_means() {
        let r = Raster::new(Pt::new(-500.0, -500.0), 10.0, 100, 100, vec![0.4; 10_000]).unwrap();
        for rad in [50.0, 100.0, 300.0] {
            assert!((raster_mean_within_buffer(Pt::new(3.0, -7.0), rad, &r).unwrap() - 0.4).abs() < 1e-12);
        }
        let nodata = Raster::new(Pt::new(-500.0, -500.0), 10.0, 100, 100, vec![f64::NAN; 10_000]).unwrap();
        assert!(raster_mean_within_buffer(Pt::new(0.0, 0.0), 50.0, &nodata).is_err());
    }

    #[test]
    fn half_plane_raster_is_balanced() {
        // 0 left of x = 0, 1 right of it; buffer centred on the boundary
        let n = 200;
        let vals: Vec<f64> = (0..n * n).map(|i| if (i % n) < n / 2 { 0.0 } else { 1.0 }).collect();
        let r = Raster::new(Pt::new(-1000.0, -1000.0), 10.0, n, n, vals).unwrap();
        let mean = raster_mean_within_buffer(Pt::new(0.0, 0.0), 200.0, &r).unwrap();
        // direct enumeration of cell centres
        let (mut s, mut k) = (0.0, 0.0);
        for row in 0..n {
            for col in 0..n {
                let c = r.cell_center(row, col);
                if c.x * c.x + c.y * c.y < 200.0 * 200.0 {
                    s += r.get(row, col).unwrap();
                    k += 1.0;
                }
            }
        }
        assert!((mean - s / k).abs() < 1e-12);
        // one-cell discretization band: cells per buffer ~ pi*20^2
        assert!((mean - 0.5).abs() < 1.0 / (std::f64::consts::PI * 400.0).sqrt());
    }
}
