//! Exact planar geometry primitives: distances, disk clipping, containment.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pt {
    pub x: f64,
    pub y: f64,
}

impl Pt {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dist2(self, o: Pt) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(self, o: Pt) -> f64 {
        self.dist2(o).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Pt,
    pub max: Pt,
}

impl BBox {
    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a Pt>) -> Option<BBox> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        let mut b = BBox {
            min: first,
            max: first,
        };
        for p in it {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    /// Squared distance from a point to the box (0 inside).
    pub fn dist2(&self, p: Pt) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx * dx + dy * dy
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// Euclidean distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Pt::new(a.x + t * dx, a.y + t * dy))
}

/// Length of the segment `a`-`b` lying inside the open disk of radius `r`
/// around `c`.
///
/// Solves `|a + t(b - a) - c|^2 < r^2` for `t` and intersects the root
/// interval with `[0, 1]`. A tangent segment contributes zero.
pub fn segment_length_in_disk(a: Pt, b: Pt, c: Pt, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let fx = a.x - c.x;
    let fy = a.y - c.y;
    let qa = dx * dx + dy * dy;
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * (fx * dx + fy * dy);
    let qc = fx * fx + fy * fy - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (qb + qb.signum() * sq);
    let (mut t1, mut t2) = if q == 0.0 {
        let h = sq / (2.0 * qa);
        (-h, h)
    } else {
        (q / qa, qc / q)
    };
    if t1 > t2 {
        std::mem::swap(&mut t1, &mut t2);
    }
    let lo = t1.max(0.0);
    let hi = t2.min(1.0);
    if hi <= lo {
        0.0
    } else {
        (hi - lo) * qa.sqrt()
    }
}

/// Even-odd containment test for a closed ring. Points on the boundary may
/// fall on either side; callers that need boundary semantics combine this
/// with a distance check.
pub fn point_in_ring(p: Pt, ring: &[Pt]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = ring[i];
        let b = ring[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Polygon with an exterior ring and optional holes. Rings are stored
/// closed (first vertex repeated at the end).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Pt>,
    pub holes: Vec<Vec<Pt>>,
}

impl Polygon {
    pub fn new(exterior: Vec<Pt>) -> Self {
        Self {
            exterior: close_ring(exterior),
            holes: Vec::new(),
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Pt>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn contains(&self, p: Pt) -> bool {
        point_in_ring(p, &self.exterior) && !self.holes.iter().any(|h| point_in_ring(p, h))
    }

    pub fn boundary_distance(&self, p: Pt) -> f64 {
        self.rings()
            .flat_map(|r| r.windows(2))
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance to the polygon: zero inside, boundary distance outside.
    pub fn distance(&self, p: Pt) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    pub fn area(&self) -> f64 {
        ring_area(&self.exterior).abs() - self.holes.iter().map(|h| ring_area(h).abs()).sum::<f64>()
    }

    pub fn bbox(&self) -> BBox {
        BBox::of_points(&self.exterior).expect("polygon has vertices")
    }
}

/// Signed shoelace area of a ring.
pub fn ring_area(ring: &[Pt]) -> f64 {
    ring.windows(2)
        .map(|w| w[0].x * w[1].y - w[1].x * w[0].y)
        .sum::<f64>()
        * 0.5
}

pub fn close_ring(mut ring: Vec<Pt>) -> Vec<Pt> {
    if let (Some(&f), Some(&l)) = (ring.first(), ring.last()) {
        if f != l {
            ring.push(f);
        }
    }
    ring
}

pub fn polyline_distance(p: Pt, line: &[Pt]) -> f64 {
    line.windows(2)
        .map(|w| point_segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

pub fn polyline_length_in_disk(line: &[Pt], c: Pt, r: f64) -> f64 {
    line.windows(2)
        .map(|w| segment_length_in_disk(w[0], w[1], c, r))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_to_segment_endpoint() {
        let d = point_segment_distance(Pt::new(0.0, 0.0), Pt::new(3.0, 4.0), Pt::new(3.0, 10.0));
        assert_eq!(d, 5.0);
    }

    #[test]
    fn diameter_chord() {
        let l = segment_length_in_disk(Pt::new(-500.0, 0.0), Pt::new(500.0, 0.0), Pt::new(0.0, 0.0), 50.0);
        assert!((l - 100.0).abs() < 1e-12);
    }

    #[test]
    fn offset_chord_matches_formula() {
        let l = segment_length_in_disk(Pt::new(-1e4, 30.0), Pt::new(1e4, 30.0), Pt::new(0.0, 0.0), 50.0);
        assert!((l - 80.0).abs() < 1e-9, "{l}");
    }

    #[test]
    fn tangent_and_outside_give_zero() {
        let c = Pt::new(0.0, 0.0);
        assert_eq!(segment_length_in_disk(Pt::new(-10.0, 5.0), Pt::new(10.0, 5.0), c, 5.0), 0.0);
        assert_eq!(segment_length_in_disk(Pt::new(60.0, 0.0), Pt::new(90.0, 0.0), c, 50.0), 0.0);
    }

    #[test]
    fn segment_fully_inside() {
        let l = segment_length_in_disk(Pt::new(-1.0, 0.0), Pt::new(2.0, 0.0), Pt::new(0.0, 0.0), 50.0);
        assert!((l - 3.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_with_hole() {
        let mut poly = Polygon::new(vec![
            Pt::new(0.0, 0.0),
            Pt::new(10.0, 0.0),
            Pt::new(10.0, 10.0),
            Pt::new(0.0, 10.0),
        ]);
        poly.holes.push(close_ring(vec![
            Pt::new(4.0, 4.0),
            Pt::new(6.0, 4.0),
            Pt::new(6.0, 6.0),
            Pt::new(4.0, 6.0),
        ]));
        assert_eq!(poly.distance(Pt::new(1.0, 1.0)), 0.0);
        assert!((poly.distance(Pt::new(5.0, 5.0)) - 1.0).abs() < 1e-12);
        assert!((poly.distance(Pt::new(13.0, 14.0)) - 5.0).abs() < 1e-12);
        assert!((poly.area() - 96.0).abs() < 1e-12);
    }
}
