//! Seeded synthetic cities with a published ground-truth noise function.
//!
//! Each city is a 4 km square with a road network covering all six road
//! classes, building points, land-use polygons and population. Cities are
//! laid out 15 km apart along the x axis in one planar CRS and share the
//! road, land-use, building and imperviousness layers.
//!
//! Site levels follow
//!
//! L = 45 + 12 sat(LMRoad100/400) + 6 sat(LARoad50/150)
//!        - 4 max(0, 1 - DGreen/500) + 3 sat(Build100/40) + e
//!
//! with sat(u) = min(u, 1) and e ~ N(0, 3^2) on the five-year mean (a site
//! effect plus yearly N(0, 1) deviations).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geojson::{FeatureCollection, JsonObject, JsonValue};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{default_specs, FeatureEngine, PredictorSpec, BUILDINGS, IMPERVIOUSNESS, LANDUSE, ROADS};
use crate::geodata::{
    feature, write_raster, write_sites, write_vector_layer, GeoLayer, Geometry, LayerKind, LayerSet,
    Raster, SiteMeasurement, VectorFeature, VectorLayer, LAEQ_RANGE,
};
use crate::geometry::{Polygon, Pt};
use crate::rng::substream;

pub const CITY_SIZE: f64 = 4000.0;
pub const CITY_SPACING: f64 = 15_000.0;
pub const NOISE_SD: f64 = 3.0;
pub const YEAR_SD: f64 = 1.0;
pub const YEARS: [i32; 5] = [2018, 2019, 2020, 2021, 2022];
pub const CRS: &str = "EPSG:32635";
pub const ROAD_CLASS_FIELD: &str = "class";
pub const LANDUSE_CLASS_FIELD: &str = "code_2018";
pub const CITY_FIELD: &str = "city";
const IMP_CELL: f64 = 50.0;
const POP_CELL: f64 = 100.0;
const MAJOR: [&str; 3] = ["motorway", "primary", "secondary"];

fn sat(u: f64) -> f64 {
    u.min(1.0)
}

/// Noise-free part of the ground truth, dB(A).
pub fn truth_signal(lm_road100: f64, la_road50: f64, d_green: f64, build100: f64) -> f64 {
    45.0 + 12.0 * sat(lm_road100 / 400.0) + 6.0 * sat(la_road50 / 150.0) - 4.0 * (1.0 - d_green / 500.0).max(0.0)
        + 3.0 * sat(build100 / 40.0)
}

/// Names of the predictors entering [`truth_signal`], in argument order.
pub const TRUTH_PREDICTORS: [&str; 4] = ["LMRoad100", "LARoad50", "DGreen", "Build100"];

#[derive(Debug, Clone)]
pub struct SynthCity {
    pub name: String,
    pub center: Pt,
    pub boundary: Polygon,
    pub population: Raster,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub seed: u64,
    pub cities: Vec<SynthCity>,
    pub roads: VectorLayer,
    pub landuse: VectorLayer,
    pub buildings: VectorLayer,
    pub imperviousness: Raster,
    pub sites: Vec<SiteMeasurement>,
    /// Noise-free level per site.
    pub signal: Vec<f64>,
}

/// Standard file names inside a dataset directory.
pub mod files {
    pub const SITES: &str = "sites.csv";
    pub const ROADS: &str = "roads.geojson";
    pub const LANDUSE: &str = "landuse.geojson";
    pub const BUILDINGS: &str = "buildings.geojson";
    pub const IMPERVIOUSNESS: &str = "imperviousness.asc";
    pub const BOUNDARIES: &str = "boundaries.geojson";
    pub const TRUTH: &str = "truth.csv";

    pub fn population(city: &str) -> String {
        format!("population_{city}.asc")
    }
}

fn jittered_line(a: Pt, b: Pt, k: usize, sd: f64, rng: &mut ChaCha8Rng) -> Vec<Pt> {
    let n = Normal::new(0.0, sd).expect("sd > 0");
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    let (nx, ny) = (-dy / len, dx / len);
    (0..=k)
        .map(|i| {
            let t = i as f64 / k as f64;
            let off = if i == 0 || i == k { 0.0 } else { n.sample(rng) };
            Pt::new(a.x + t * dx + off * nx, a.y + t * dy + off * ny)
        })
        .collect()
}

/// Two carriageways `gap` apart on either side of `line`.
fn carriageways(line: &[Pt], gap: f64) -> [Vec<Pt>; 2] {
    let shift = |side: f64| -> Vec<Pt> {
        (0..line.len())
            .map(|i| {
                let (a, b) = (line[i.saturating_sub(1)], line[(i + 1).min(line.len() - 1)]);
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let len = dx.hypot(dy);
                Pt::new(line[i].x - side * gap / 2.0 * dy / len, line[i].y + side * gap / 2.0 * dx / len)
            })
            .collect()
    };
    [shift(1.0), shift(-1.0)]
}

fn rect(x0: f64, y0: f64, w: f64, h: f64) -> Polygon {
    Polygon::new(vec![
        Pt::new(x0, y0),
        Pt::new(x0 + w, y0),
        Pt::new(x0 + w, y0 + h),
        Pt::new(x0, y0 + h),
    ])
}

/// Square with cut corners, in city coordinates offset by `o`.
fn boundary(o: Pt, rng: &mut ChaCha8Rng) -> Polygon {
    let s = CITY_SIZE;
    let c = 500.0 + 400.0 * rng.random::<f64>();
    Polygon::new(
        [
            (c, 0.0),
            (s - c, 0.0),
            (s, c),
            (s, s - c),
            (s - c, s),
            (c, s),
            (0.0, s - c),
            (0.0, c),
        ]
        .iter()
        .map(|&(x, y)| Pt::new(o.x + x, o.y + y))
        .collect(),
    )
}

struct CityLayers {
    roads: Vec<VectorFeature>,
    landuse: Vec<VectorFeature>,
    buildings: Vec<VectorFeature>,
    green: Vec<Polygon>,
}

fn road(line: Vec<Pt>, class: &str) -> VectorFeature {
    VectorFeature {
        geometry: Geometry::Polyline(line),
        class_tag: class.into(),
    }
}

fn area(poly: Polygon, code: &str) -> VectorFeature {
    VectorFeature {
        geometry: Geometry::Polygon(poly),
        class_tag: code.into(),
    }
}

fn city_layers(index: usize, o: Pt, rng: &mut ChaCha8Rng) -> CityLayers {
    let s = CITY_SIZE;
    let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let p = |x: f64, y: f64| Pt::new(o.x + x, o.y + y);
    let mut roads = Vec::new();

    // motorway bypass along the southern edge and a primary cross through
    // the centre, all dual carriageway
    let c = s / 2.0;
    let y = u(rng, 250.0, 700.0);
    let motorway = jittered_line(p(-800.0, y), p(s + 800.0, y + u(rng, -300.0, 300.0)), 6, 40.0, rng);
    let (cx, cy) = (c + u(rng, -150.0, 150.0), c + u(rng, -150.0, 150.0));
    let primaries = [
        jittered_line(p(0.0, cy), p(s, cy + u(rng, -200.0, 200.0)), 8, 25.0, rng),
        jittered_line(p(cx, 0.0), p(cx + u(rng, -200.0, 200.0), s), 8, 25.0, rng),
        jittered_line(p(300.0, 300.0), p(s - 300.0, s - 300.0), 8, 30.0, rng),
    ];
    for (line, class) in std::iter::once((motorway, "motorway")).chain(primaries.into_iter().map(|l| (l, "primary"))) {
        for half in carriageways(&line, 20.0) {
            roads.push(road(half, class));
        }
    }
    // secondary roads
    for _ in 0..3 {
        let y = u(rng, 400.0, s - 400.0);
        roads.push(road(jittered_line(p(200.0, y), p(s - 200.0, y + u(rng, -200.0, 200.0)), 6, 20.0, rng), "secondary"));
        let x = u(rng, 400.0, s - 400.0);
        roads.push(road(jittered_line(p(x, 200.0), p(x + u(rng, -200.0, 200.0), s - 200.0), 6, 20.0, rng), "secondary"));
    }
    // tertiary roads between opposite edges
    for _ in 0..6 {
        let (a, b) = if rng.random::<bool>() {
            (p(u(rng, 0.0, s), 0.0), p(u(rng, 0.0, s), s))
        } else {
            (p(0.0, u(rng, 0.0, s)), p(s, u(rng, 0.0, s)))
        };
        roads.push(road(jittered_line(a, b, 5, 30.0, rng), "tertiary"));
    }
    // residential grid blocks
    let step = 200.0;
    let n = (s / step) as usize;
    for i in 1..n {
        for j in 1..n {
            let base = p(i as f64 * step, j as f64 * step);
            let r_center = (base.x - o.x - c).hypot(base.y - o.y - c);
            let keep = 0.75 * (-r_center / 2500.0).exp();
            if rng.random::<f64>() < keep {
                roads.push(road(jittered_line(base, Pt::new(base.x + step, base.y), 2, 8.0, rng), "residential"));
            }
            if rng.random::<f64>() < keep {
                roads.push(road(jittered_line(base, Pt::new(base.x, base.y + step), 2, 8.0, rng), "residential"));
            }
        }
    }
    // footways
    for _ in 0..40 {
        let a = p(u(rng, 200.0, s - 200.0), u(rng, 200.0, s - 200.0));
        let ang = u(rng, 0.0, std::f64::consts::TAU);
        let len = u(rng, 50.0, 150.0);
        roads.push(road(vec![a, Pt::new(a.x + len * ang.cos(), a.y + len * ang.sin())], "footway"));
    }

    let mut landuse = vec![area(rect(o.x + c - 800.0, o.y + c - 800.0, 1600.0, 1600.0), "11100")];
    let mut green = Vec::new();
    for _ in 0..5 {
        let w = u(rng, 150.0, 400.0);
        let h = u(rng, 150.0, 400.0);
        let g = rect(o.x + u(rng, 100.0, s - 500.0), o.y + u(rng, 100.0, s - 500.0), w, h);
        green.push(g.clone());
        landuse.push(area(g, "14100"));
    }
    let ry = u(rng, 1000.0, s - 1000.0);
    landuse.push(area(rect(o.x - 500.0, o.y + ry, s + 1000.0, 25.0), "12230"));
    if index % 2 == 0 {
        landuse.push(area(rect(o.x + s + 300.0, o.y + u(rng, 0.0, s - 1500.0), 1200.0, 1500.0), "12400"));
    }
    for _ in 0..2 {
        landuse.push(area(rect(o.x + u(rng, 200.0, s - 700.0), o.y + u(rng, 200.0, 1200.0), 500.0, 300.0), "12100"));
    }
    for code in ["23000", "22000", "31000"] {
        landuse.push(area(rect(o.x + u(rng, -1500.0, s), o.y + s + u(rng, 100.0, 800.0), 800.0, 600.0), code));
    }

    let mut buildings = Vec::new();
    let radial = Normal::new(0.0, 900.0).expect("sd > 0");
    while buildings.len() < 12_000 {
        let q = p(c + radial.sample(rng), c + radial.sample(rng));
        let (lx, ly) = (q.x - o.x, q.y - o.y);
        if !(0.0..s).contains(&lx) || !(0.0..s).contains(&ly) || green.iter().any(|g| g.contains(q)) {
            continue;
        }
        buildings.push(VectorFeature {
            geometry: Geometry::Point(q),
            class_tag: "building".into(),
        });
    }
    CityLayers {
        roads,
        landuse,
        buildings,
        green,
    }
}

fn city_population(o: Pt, bound: &Polygon, green: &[Polygon], rng: &mut ChaCha8Rng) -> Result<Raster> {
    let n = (CITY_SIZE / POP_CELL) as usize;
    let c = Pt::new(o.x + CITY_SIZE / 2.0, o.y + CITY_SIZE / 2.0);
    let mut v = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let q = Pt::new(o.x + (col as f64 + 0.5) * POP_CELL, o.y + ((n - row) as f64 - 0.5) * POP_CELL);
            if !bound.contains(q) || green.iter().any(|g| g.contains(q)) {
                continue;
            }
            let base = 90.0 * (-q.dist(c) / 1200.0).exp();
            v[row * n + col] = (base * (0.7 + 0.6 * rng.random::<f64>())).round();
        }
    }
    Raster::new(o, POP_CELL, n, n, v)
}

fn imperviousness(centers: &[Pt], green: &[Polygon], rng: &mut ChaCha8Rng) -> Result<Raster> {
    let pad = 2000.0;
    let x0 = centers.iter().map(|c| c.x).fold(f64::INFINITY, f64::min) - CITY_SIZE / 2.0 - pad;
    let x1 = centers.iter().map(|c| c.x).fold(f64::NEG_INFINITY, f64::max) + CITY_SIZE / 2.0 + pad;
    let y0 = -pad;
    let y1 = CITY_SIZE + pad;
    let n_cols = ((x1 - x0) / IMP_CELL).ceil() as usize;
    let n_rows = ((y1 - y0) / IMP_CELL).ceil() as usize;
    let origin = Pt::new(x0, y0);
    let probe = Raster::new(origin, IMP_CELL, n_rows, n_cols, vec![0.0; n_rows * n_cols])?;
    let mut v = Vec::with_capacity(n_rows * n_cols);
    for row in 0..n_rows {
        for col in 0..n_cols {
            let q = probe.cell_center(row, col);
            let d = centers.iter().map(|c| q.dist(*c)).fold(f64::INFINITY, f64::min);
            let mut val = 0.02 + 0.85 * (-d / 1400.0).exp() + 0.08 * (rng.random::<f64>() - 0.5);
            if green.iter().any(|g| g.contains(q)) {
                val = 0.05 * rng.random::<f64>();
            }
            v.push((val.clamp(0.0, 1.0) * 1000.0).round() / 1000.0);
        }
    }
    Raster::new(origin, IMP_CELL, n_rows, n_cols, v)
}

fn features_of_class<'a>(roads: &'a [VectorFeature], classes: &[&str]) -> Vec<&'a [Pt]> {
    roads
        .iter()
        .filter(|f| classes.contains(&f.class_tag.as_str()))
        .filter_map(|f| match &f.geometry {
            Geometry::Polyline(l) => Some(l.as_slice()),
            _ => None,
        })
        .collect()
}

/// Random point near a random segment of one of `lines`.
fn near_road(lines: &[&[Pt]], max_offset: f64, rng: &mut ChaCha8Rng) -> Pt {
    let line = lines[rng.random_range(0..lines.len())];
    let k = rng.random_range(0..line.len() - 1);
    let (a, b) = (line[k], line[k + 1]);
    let t = rng.random::<f64>();
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    let off = max_offset * (2.0 * rng.random::<f64>() - 1.0);
    Pt::new(a.x + t * dx - off * dy / len, a.y + t * dy + off * dx / len)
}

fn truth_specs() -> Vec<PredictorSpec> {
    default_specs()
        .into_iter()
        .filter(|s| TRUTH_PREDICTORS.contains(&s.name.as_str()))
        .collect()
}

/// Split `n` sites over `k` cities, larger shares first.
fn city_counts(n: usize, k: usize) -> Vec<usize> {
    let weights: Vec<f64> = (0..k).map(|i| 1.0 / (i as f64 + 3.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = weights.iter().map(|w| (n as f64 * w / total).floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut i = 0;
    while rest > 0 {
        counts[i % k] += 1;
        rest -= 1;
        i += 1;
    }
    counts
}

pub fn generate(seed: u64, n_sites: usize, n_cities: usize) -> Result<SynthDataset> {
    if n_cities == 0 || n_sites < n_cities {
        return Err(Error::invalid(format!(
            "need at least one city and one site per city, got {n_sites} sites for {n_cities} cities"
        )));
    }
    let mut road_features = Vec::new();
    let mut landuse_features = Vec::new();
    let mut building_features = Vec::new();
    let mut cities = Vec::new();
    let mut green_all = Vec::new();
    let mut per_city_roads = Vec::new();
    for k in 0..n_cities {
        let mut rng = substream(seed, k as u64);
        let o = Pt::new(k as f64 * CITY_SPACING, 0.0);
        let bound = boundary(o, &mut rng);
        let layers = city_layers(k, o, &mut rng);
        let population = city_population(o, &bound, &layers.green, &mut rng)?;
        cities.push(SynthCity {
            name: format!("city{}", k + 1),
            center: Pt::new(o.x + CITY_SIZE / 2.0, o.y + CITY_SIZE / 2.0),
            boundary: bound,
            population,
        });
        per_city_roads.push(layers.roads.clone());
        road_features.extend(layers.roads);
        landuse_features.extend(layers.landuse);
        building_features.extend(layers.buildings);
        green_all.extend(layers.green);
    }
    let centers: Vec<Pt> = cities.iter().map(|c| c.center).collect();
    let imp = imperviousness(&centers, &green_all, &mut substream(seed, 1000))?;
    let mut roads = VectorLayer::new(LayerKind::Polyline, road_features)?;
    let mut landuse = VectorLayer::new(LayerKind::Polygon, landuse_features)?;
    let mut buildings = VectorLayer::new(LayerKind::Point, building_features)?;
    for l in [&mut roads, &mut landuse, &mut buildings] {
        l.crs = Some(CRS.into());
    }

    let mut ds = SynthDataset {
        seed,
        cities,
        roads,
        landuse,
        buildings,
        imperviousness: imp,
        sites: Vec::new(),
        signal: Vec::new(),
    };
    let layer_set = ds.layer_set()?;
    let engine = FeatureEngine::new(&layer_set, crate::features::DEFAULT_DISTANCE_CEILING);
    let specs = truth_specs();
    let site_sd = (NOISE_SD * NOISE_SD - YEAR_SD * YEAR_SD / YEARS.len() as f64).sqrt();
    let site_noise = Normal::new(0.0, site_sd).expect("sd > 0");
    let year_noise = Normal::new(0.0, YEAR_SD).expect("sd > 0");
    for (k, count) in city_counts(n_sites, n_cities).into_iter().enumerate() {
        let mut rng = substream(seed, 2000 + k as u64);
        let city = &ds.cities[k];
        let major = features_of_class(&per_city_roads[k], &MAJOR);
        let minor = features_of_class(&per_city_roads[k], &["tertiary", "residential"]);
        let mut placed: Vec<Pt> = Vec::new();
        while placed.len() < count {
            let u = rng.random::<f64>();
            let q = if u < 0.5 {
                near_road(&major, 25.0, &mut rng)
            } else if u < 0.75 {
                near_road(&minor, 40.0, &mut rng)
            } else {
                let bb = city.boundary.bbox();
                Pt::new(
                    bb.min.x + bb.width() * rng.random::<f64>(),
                    bb.min.y + bb.height() * rng.random::<f64>(),
                )
            };
            if !city.boundary.contains(q) || placed.iter().any(|p| p.dist(q) < 5.0) {
                continue;
            }
            placed.push(q);
        }
        for (i, q) in placed.into_iter().enumerate() {
            let id = format!("{}-{:03}", city.name, i + 1);
            let v = specs
                .iter()
                .map(|s| engine.evaluate(s, q))
                .collect::<Result<Vec<f64>>>()?;
            let by_name: BTreeMap<&str, f64> = specs.iter().map(|s| s.name.as_str()).zip(v).collect();
            let signal = truth_signal(
                by_name["LMRoad100"],
                by_name["LARoad50"],
                by_name["DGreen"],
                by_name["Build100"],
            );
            let e = site_noise.sample(&mut rng);
            let yearly: BTreeMap<i32, f64> = YEARS
                .iter()
                .map(|&y| {
                    let l = signal + e + year_noise.sample(&mut rng);
                    (y, (l.clamp(LAEQ_RANGE.0, LAEQ_RANGE.1) * 100.0).round() / 100.0)
                })
                .collect();
            // coordinates to the centimetre so that the CSV round-trips exactly
            let (x, y) = ((q.x * 100.0).round() / 100.0, (q.y * 100.0).round() / 100.0);
            ds.sites.push(SiteMeasurement::new(id, city.name.clone(), x, y, yearly)?);
            ds.signal.push(signal);
        }
    }
    Ok(ds)
}

impl SynthDataset {
    pub fn layer_set(&self) -> Result<LayerSet> {
        let mut s = LayerSet::new();
        s.insert(ROADS, GeoLayer::Vector(self.roads.clone()))?;
        s.insert(LANDUSE, GeoLayer::Vector(self.landuse.clone()))?;
        s.insert(BUILDINGS, GeoLayer::Vector(self.buildings.clone()))?;
        s.insert(IMPERVIOUSNESS, GeoLayer::Raster(self.imperviousness.clone()))?;
        Ok(s)
    }

    pub fn boundaries_geojson(&self) -> FeatureCollection {
        let features = self
            .cities
            .iter()
            .map(|c| {
                let mut props = JsonObject::new();
                props.insert(CITY_FIELD.into(), JsonValue::String(c.name.clone()));
                feature(&Geometry::Polygon(c.boundary.clone()), props)
            })
            .collect();
        FeatureCollection {
            bbox: None,
            features,
            foreign_members: None,
        }
    }

    /// Write every input file into `dir`; returns the written paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        let path = |name: &str| dir.join(name);
        write_sites(path(files::SITES), &self.sites)?;
        out.push(path(files::SITES));
        write_vector_layer(path(files::ROADS), &self.roads, ROAD_CLASS_FIELD)?;
        out.push(path(files::ROADS));
        write_vector_layer(path(files::LANDUSE), &self.landuse, LANDUSE_CLASS_FIELD)?;
        out.push(path(files::LANDUSE));
        write_vector_layer(path(files::BUILDINGS), &self.buildings, ROAD_CLASS_FIELD)?;
        out.push(path(files::BUILDINGS));
        write_raster(path(files::IMPERVIOUSNESS), &self.imperviousness)?;
        out.push(path(files::IMPERVIOUSNESS));
        let b = path(files::BOUNDARIES);
        std::fs::write(&b, serde_json::to_string(&self.boundaries_geojson())?).map_err(|e| Error::io(&b, e))?;
        out.push(b);
        for c in &self.cities {
            let p = path(&files::population(&c.name));
            write_raster(&p, &c.population)?;
            out.push(p);
        }
        let t = path(files::TRUTH);
        let mut w = csv::Writer::from_path(&t)?;
        w.write_record(["site_id", "signal"])?;
        for (s, v) in self.sites.iter().zip(&self.signal) {
            w.write_record([s.site_id.as_str(), &v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&t, e))?;
        out.push(t);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::ClassFilter;

    #[test]
    fn truth_function_corners() {
        assert_eq!(truth_signal(0.0, 0.0, 1000.0, 0.0), 45.0);
        assert_eq!(truth_signal(800.0, 300.0, 1000.0, 80.0), 66.0);
        assert_eq!(truth_signal(0.0, 0.0, 0.0, 0.0), 41.0);
    }

    #[test]
    fn small_dataset() {
        let ds = generate(3, 10, 2).unwrap();
        assert_eq!(ds.sites.len(), 10);
        assert!(ds.sites.iter().all(|s| s.mean_laeq >= 20.0 && s.mean_laeq <= 120.0));
        for class in crate::geodata::ROAD_CLASSES {
            assert!(ds.roads.count_matching(&ClassFilter::only([class])) > 0, "{class}");
        }
        let again = generate(3, 10, 2).unwrap();
        assert_eq!(ds.sites, again.sites);
        assert_eq!(city_counts(232, 5).iter().sum::<usize>(), 232);
    }
}
