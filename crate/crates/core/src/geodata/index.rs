//! R-tree acceleration over a vector layer.
//!
//! Polylines and polygon rings are indexed per segment and polygons as whole
//! shapes, so nearest and range queries refine candidates with the same exact
//! distance used by a linear scan.

use std::sync::Arc;

use rstar::{PointDistance, RTree, RTreeObject, AABB};

use super::layer::{ClassFilter, GeoLayer, Geometry, VectorLayer};
use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, BBox, Polygon, Pt};

#[derive(Debug, Clone)]
enum Shape {
    Point(Pt),
    Segment(Pt, Pt),
    Polygon(Arc<Polygon>),
}

#[derive(Debug, Clone)]
struct Item {
    feature: usize,
    shape: Shape,
    env: AABB<[f64; 2]>,
}

impl Item {
    fn distance(&self, p: Pt) -> f64 {
        match &self.shape {
            Shape::Point(q) => p.dist(*q),
            Shape::Segment(a, b) => point_segment_distance(p, *a, *b),
            Shape::Polygon(poly) => poly.distance(p),
        }
    }
}

impl RTreeObject for Item {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        self.env
    }
}

impl PointDistance for Item {
    fn distance_2(&self, point: &[f64; 2]) -> f64 {
        let d = self.distance(Pt::new(point[0], point[1]));
        d * d
    }
}

fn aabb(a: Pt, b: Pt) -> AABB<[f64; 2]> {
    AABB::from_corners([a.x, a.y], [b.x, b.y])
}

/// Spatial index over the features of one vector layer matching a class
/// filter. Returned feature ids refer to positions in the source layer.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    tree: RTree<Item>,
    geometries: Vec<(usize, Geometry)>,
}

impl SpatialIndex {
    pub fn build(layer: &GeoLayer) -> Result<Self> {
        match layer {
            GeoLayer::Vector(v) => Self::build_filtered(v, &ClassFilter::All),
            GeoLayer::Raster(_) => Err(Error::invalid("cannot index a raster layer")),
        }
    }

    pub fn build_filtered(layer: &VectorLayer, filter: &ClassFilter) -> Result<Self> {
        let mut items = Vec::new();
        let mut geometries = Vec::new();
        for (i, f) in layer.features.iter().enumerate() {
            if !filter.matches(&f.class_tag) {
                continue;
            }
            geometries.push((i, f.geometry.clone()));
            match &f.geometry {
                Geometry::Point(p) => items.push(Item {
                    feature: i,
                    shape: Shape::Point(*p),
                    env: aabb(*p, *p),
                }),
                Geometry::Polyline(line) => {
                    for w in line.windows(2) {
                        items.push(Item {
                            feature: i,
                            shape: Shape::Segment(w[0], w[1]),
                            env: aabb(w[0], w[1]),
                        });
                    }
                }
                Geometry::Polygon(poly) => {
                    let b = poly.bbox();
                    items.push(Item {
                        feature: i,
                        shape: Shape::Polygon(Arc::new(poly.clone())),
                        env: aabb(b.min, b.max),
                    });
                }
            }
        }
        if items.is_empty() {
            return Err(Error::NoMatchingFeature {
                layer: format!("{:?}", layer.kind),
                filter: filter.to_string(),
            });
        }
        Ok(Self {
            tree: RTree::bulk_load(items),
            geometries,
        })
    }

    /// Number of indexed features.
    pub fn len(&self) -> usize {
        self.geometries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometries.is_empty()
    }

    /// Nearest feature and its exact distance.
    pub fn nearest(&self, p: Pt) -> Option<(usize, f64)> {
        self.tree
            .nearest_neighbor(&[p.x, p.y])
            .map(|it| (it.feature, it.distance(p)))
    }

    /// Features at distance strictly less than `r`, sorted by feature id.
    pub fn within_circle(&self, p: Pt, r: f64) -> Vec<usize> {
        if r <= 0.0 {
            return Vec::new();
        }
        let env = AABB::from_corners([p.x - r, p.y - r], [p.x + r, p.y + r]);
        let mut out: Vec<usize> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .filter(|it| it.distance(p) < r)
            .map(|it| it.feature)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Features with any part inside the closed box, sorted by feature id.
    pub fn within_box(&self, b: BBox) -> Vec<usize> {
        let env = aabb(b.min, b.max);
        let mut out: Vec<usize> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .filter(|it| match &it.shape {
                Shape::Point(q) => box_contains(&b, *q),
                Shape::Segment(a, c) => segment_intersects_box(*a, *c, &b),
                Shape::Polygon(poly) => polygon_intersects_box(poly, &b),
            })
            .map(|it| it.feature)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Indexed (feature id, geometry) pairs in layer order.
    pub fn geometries(&self) -> &[(usize, Geometry)] {
        &self.geometries
    }
}

fn box_contains(b: &BBox, p: Pt) -> bool {
    p.x >= b.min.x && p.x <= b.max.x && p.y >= b.min.y && p.y <= b.max.y
}

/// Liang-Barsky clip of a segment against a closed box.
pub fn segment_intersects_box(a: Pt, c: Pt, b: &BBox) -> bool {
    let (dx, dy) = (c.x - a.x, c.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.x - b.min.x),
        (dx, b.max.x - a.x),
        (-dy, a.y - b.min.y),
        (dy, b.max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

pub fn polygon_intersects_box(poly: &Polygon, b: &BBox) -> bool {
    poly.rings()
        .flat_map(|r| r.windows(2))
        .any(|w| segment_intersects_box(w[0], w[1], b))
        || poly.contains(Pt::new((b.min.x + b.max.x) / 2.0, (b.min.y + b.max.y) / 2.0))
}

/// Exact predicate used by [`SpatialIndex::within_box`], exposed for scans.
pub fn geometry_intersects_box(g: &Geometry, b: &BBox) -> bool {
    match g {
        Geometry::Point(q) => box_contains(b, *q),
        Geometry::Polyline(l) => l.windows(2).any(|w| segment_intersects_box(w[0], w[1], b)),
        Geometry::Polygon(p) => polygon_intersects_box(p, b),
    }
}
