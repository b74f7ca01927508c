//! GeoJSON reading and writing for class-tagged vector layers.

use std::path::Path;

use geojson::{Feature, FeatureCollection, GeoJson, GeometryValue, JsonObject, JsonValue, Position};

use super::layer::{Geometry, LayerKind, VectorFeature, VectorLayer, Vocabulary};
use crate::error::{Error, Result};
use crate::geometry::{close_ring, Polygon, Pt};

/// Counts of features dropped while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub accepted: usize,
    pub wrong_kind: usize,
    pub bad_class: usize,
    pub invalid: usize,
}

impl LoadStats {
    pub fn skipped(&self) -> usize {
        self.wrong_kind + self.bad_class + self.invalid
    }
}

/// Load a GeoJSON file as a vector layer of the declared kind.
///
/// Multi-geometries are split into one feature per part. Features of another
/// kind, with a class outside `vocabulary`, or with invalid geometry are
/// skipped and counted. A layer with no accepted feature is an error.
pub fn load_vector_layer(
    path: impl AsRef<Path>,
    kind: LayerKind,
    class_field: &str,
    vocabulary: &Vocabulary,
) -> Result<(VectorLayer, LoadStats)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vector_layer(&text, kind, class_field, vocabulary)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn parse_vector_layer(
    text: &str,
    kind: LayerKind,
    class_field: &str,
    vocabulary: &Vocabulary,
) -> Result<(VectorLayer, LoadStats)> {
    if kind == LayerKind::Raster {
        return Err(Error::invalid("raster kind requested from a GeoJSON file"));
    }
    let gj: GeoJson = text.parse().map_err(|e: geojson::Error| Error::GeoJson(e.to_string()))?;
    let (features, crs) = match gj {
        GeoJson::FeatureCollection(fc) => {
            let crs = fc.foreign_members.as_ref().and_then(crs_name);
            (fc.features, crs)
        }
        GeoJson::Feature(f) => (vec![f], None),
        GeoJson::Geometry(g) => (
            vec![Feature {
                geometry: Some(g),
                ..Default::default()
            }],
            None,
        ),
    };

    let mut stats = LoadStats::default();
    let mut out = Vec::new();
    for f in features {
        let tag = match f.properties.as_ref().and_then(|p| p.get(class_field)) {
            Some(JsonValue::String(s)) => s.clone(),
            Some(JsonValue::Number(n)) => n.to_string(),
            Some(_) => {
                stats.bad_class += 1;
                continue;
            }
            None if *vocabulary == Vocabulary::Any => String::new(),
            None => {
                stats.bad_class += 1;
                continue;
            }
        };
        if !vocabulary.accepts(&tag) {
            stats.bad_class += 1;
            continue;
        }
        let Some(geom) = f.geometry else {
            stats.invalid += 1;
            continue;
        };
        let parts = match convert(&geom.value, kind) {
            Some(p) => p,
            None => {
                stats.wrong_kind += 1;
                continue;
            }
        };
        for g in parts {
            match g.validate() {
                Ok(()) => {
                    stats.accepted += 1;
                    out.push(VectorFeature {
                        geometry: g,
                        class_tag: tag.clone(),
                    });
                }
                Err(_) => stats.invalid += 1,
            }
        }
    }
    if stats.skipped() > 0 {
        log::warn!(
            "skipped {} features ({} wrong kind, {} class, {} invalid)",
            stats.skipped(),
            stats.wrong_kind,
            stats.bad_class,
            stats.invalid
        );
    }
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no {kind:?} features accepted ({} skipped)",
            stats.skipped()
        )));
    }
    Ok((
        VectorLayer {
            kind,
            features: out,
            crs,
        },
        stats,
    ))
}

fn crs_name(members: &JsonObject) -> Option<String> {
    let crs = members.get("crs")?;
    crs.pointer("/properties/name")
        .and_then(JsonValue::as_str)
        .map(str::to_string)
        .or_else(|| Some(crs.to_string()))
}

fn pt(p: &Position) -> Pt {
    let s = p.as_slice();
    Pt::new(
        s.first().copied().unwrap_or(f64::NAN),
        s.get(1).copied().unwrap_or(f64::NAN),
    )
}

fn line(ps: &[Position]) -> Vec<Pt> {
    let mut v: Vec<Pt> = Vec::with_capacity(ps.len());
    for p in ps {
        let q = pt(p);
        // consecutive duplicates would produce zero-length segments
        if v.last() != Some(&q) {
            v.push(q);
        }
    }
    v
}

fn polygon(rings: &[Vec<Position>]) -> Option<Polygon> {
    let mut it = rings.iter();
    let exterior = close_ring(line(it.next()?));
    let holes = it.map(|r| close_ring(line(r))).collect();
    Some(Polygon { exterior, holes })
}

fn convert(value: &GeometryValue, kind: LayerKind) -> Option<Vec<Geometry>> {
    use GeometryValue as V;
    match (value, kind) {
        (V::Point { coordinates }, LayerKind::Point) => Some(vec![Geometry::Point(pt(coordinates))]),
        (V::MultiPoint { coordinates }, LayerKind::Point) => {
            Some(coordinates.iter().map(|p| Geometry::Point(pt(p))).collect())
        }
        (V::LineString { coordinates }, LayerKind::Polyline) => {
            Some(vec![Geometry::Polyline(line(coordinates))])
        }
        (V::MultiLineString { coordinates }, LayerKind::Polyline) => {
            Some(coordinates.iter().map(|l| Geometry::Polyline(line(l))).collect())
        }
        (V::Polygon { coordinates }, LayerKind::Polygon) => {
            Some(vec![Geometry::Polygon(polygon(coordinates)?)])
        }
        (V::MultiPolygon { coordinates }, LayerKind::Polygon) => Some(
            coordinates
                .iter()
                .filter_map(|p| polygon(p).map(Geometry::Polygon))
                .collect(),
        ),
        _ => None,
    }
}

fn to_positions(pts: &[Pt]) -> Vec<Position> {
    pts.iter().map(|p| Position::from([p.x, p.y])).collect()
}

fn geometry_value(g: &Geometry) -> GeometryValue {
    match g {
        Geometry::Point(p) => GeometryValue::Point {
            coordinates: Position::from([p.x, p.y]),
        },
        Geometry::Polyline(l) => GeometryValue::LineString {
            coordinates: to_positions(l),
        },
        Geometry::Polygon(poly) => GeometryValue::Polygon {
            coordinates: poly.rings().map(|r| to_positions(r)).collect(),
        },
    }
}

/// Build a feature from a geometry and a property map.
pub fn feature(g: &Geometry, properties: JsonObject) -> Feature {
    Feature {
        geometry: Some(geojson::Geometry::new(geometry_value(g))),
        properties: Some(properties),
        ..Default::default()
    }
}

pub fn to_feature_collection(layer: &VectorLayer, class_field: &str) -> FeatureCollection {
    let features = layer
        .features
        .iter()
        .map(|f| {
            let mut props = JsonObject::new();
            props.insert(class_field.to_string(), JsonValue::String(f.class_tag.clone()));
            feature(&f.geometry, props)
        })
        .collect();
    let foreign_members = layer.crs.as_ref().map(|name| {
        let mut m = JsonObject::new();
        m.insert(
            "crs".into(),
            serde_json::json!({"type": "name", "properties": {"name": name}}),
        );
        m
    });
    FeatureCollection {
        bbox: None,
        features,
        foreign_members,
    }
}

pub fn write_vector_layer(path: impl AsRef<Path>, layer: &VectorLayer, class_field: &str) -> Result<()> {
    let path = path.as_ref();
    let fc = to_feature_collection(layer, class_field);
    std::fs::write(path, serde_json::to_string(&fc)?).map_err(|e| Error::io(path, e))
}
