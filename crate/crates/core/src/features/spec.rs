use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::ClassFilter;

/// Buffer radii (m) allowed for buffer predictors.
pub const BUFFER_RADII: [f64; 6] = [50.0, 100.0, 200.0, 300.0, 500.0, 1000.0];

/// Layer names used by the default predictor list.
pub const ROADS: &str = "roads";
pub const LANDUSE: &str = "landuse";
pub const BUILDINGS: &str = "buildings";
pub const IMPERVIOUSNESS: &str = "imperviousness";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Distance,
    BufferLength,
    BufferCount,
    BufferRasterMean,
    Coordinate(Axis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Meters,
    Count,
    Dimensionless,
    CoordinateMeters,
}

impl PredictorKind {
    pub fn unit(self) -> Unit {
        match self {
            PredictorKind::Distance | PredictorKind::BufferLength => Unit::Meters,
            PredictorKind::BufferCount => Unit::Count,
            PredictorKind::BufferRasterMean => Unit::Dimensionless,
            PredictorKind::Coordinate(_) => Unit::CoordinateMeters,
        }
    }

    pub fn is_buffer(self) -> bool {
        matches!(
            self,
            PredictorKind::BufferLength | PredictorKind::BufferCount | PredictorKind::BufferRasterMean
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub name: String,
    pub kind: PredictorKind,
    pub layer: String,
    pub class_filter: ClassFilter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

impl PredictorSpec {
    pub fn distance(name: &str, layer: &str, filter: ClassFilter) -> Self {
        Self {
            name: name.into(),
            kind: PredictorKind::Distance,
            layer: layer.into(),
            class_filter: filter,
            radius: None,
        }
    }

    pub fn buffer(name: &str, kind: PredictorKind, layer: &str, filter: ClassFilter, radius: f64) -> Self {
        Self {
            name: format!("{name}{radius}"),
            kind,
            layer: layer.into(),
            class_filter: filter,
            radius: Some(radius),
        }
    }
}

/// Check radius membership and name uniqueness. `X` and `Y` are reserved for
/// the coordinate columns appended to every matrix.
pub fn validate_specs(specs: &[PredictorSpec]) -> Result<()> {
    let mut names = HashSet::new();
    for s in specs {
        if s.name == "X" || s.name == "Y" {
            return Err(Error::invalid(format!("predictor name {} is reserved", s.name)));
        }
        if !names.insert(s.name.as_str()) {
            return Err(Error::invalid(format!("duplicate predictor name {}", s.name)));
        }
        match (s.kind.is_buffer(), s.radius) {
            (true, Some(r)) if BUFFER_RADII.contains(&r) => {}
            (true, r) => {
                return Err(Error::invalid(format!(
                    "predictor {} has radius {r:?}, expected one of {BUFFER_RADII:?}",
                    s.name
                )))
            }
            (false, Some(_)) => {
                return Err(Error::invalid(format!("predictor {} takes no radius", s.name)))
            }
            (false, None) => {}
        }
    }
    Ok(())
}

fn roads(tags: &[&str]) -> ClassFilter {
    ClassFilter::only(tags.iter().copied())
}

const MAJOR: [&str; 3] = ["motorway", "primary", "secondary"];

/// The candidate predictor set: road distances and lengths, land-use
/// distances, imperviousness and building counts. `LSRoad50` and
/// `LSRoad200` are left out; X and Y are appended at assembly time.
pub fn default_specs() -> Vec<PredictorSpec> {
    use PredictorKind::*;
    let mut v = Vec::new();
    let road_distances: [(&str, ClassFilter); 8] = [
        ("DARoad", ClassFilter::All),
        ("DMRoad", roads(&MAJOR)),
        ("DMWay", roads(&["motorway"])),
        ("DPRoad", roads(&["primary"])),
        ("DSRoad", roads(&["secondary"])),
        ("DTRoad", roads(&["tertiary"])),
        ("DRRoad", roads(&["residential"])),
        ("DFWay", roads(&["footway"])),
    ];
    for (name, f) in road_distances {
        v.push(PredictorSpec::distance(name, ROADS, f));
    }
    for r in &BUFFER_RADII[..3] {
        v.push(PredictorSpec::buffer("LARoad", BufferLength, ROADS, ClassFilter::All, *r));
    }
    for r in &BUFFER_RADII[..3] {
        v.push(PredictorSpec::buffer("LMRoad", BufferLength, ROADS, roads(&MAJOR), *r));
    }
    let per_class = [
        ("LPRoad", "primary"),
        ("LMWay", "motorway"),
        ("LSRoad", "secondary"),
        ("LTRoad", "tertiary"),
        ("LRRoad", "residential"),
        ("LFWay", "footway"),
    ];
    for (name, class) in per_class {
        for r in BUFFER_RADII {
            if name == "LSRoad" && (r == 50.0 || r == 200.0) {
                continue;
            }
            v.push(PredictorSpec::buffer(name, BufferLength, ROADS, roads(&[class]), r));
        }
    }
    let landuse: [(&str, &[&str]); 6] = [
        ("DAir", &["12400"]),
        ("DRail", &["12230"]),
        ("DGreen", &["14100"]),
        ("DOGreen", &["23000", "22000", "31000"]),
        ("DUrban", &["11100"]),
        ("DOLU", &["12100"]),
    ];
    for (name, codes) in landuse {
        v.push(PredictorSpec::distance(name, LANDUSE, ClassFilter::only(codes.iter().copied())));
    }
    for r in BUFFER_RADII {
        v.push(PredictorSpec::buffer("Imp", BufferRasterMean, IMPERVIOUSNESS, ClassFilter::All, r));
    }
    for r in BUFFER_RADII {
        v.push(PredictorSpec::buffer("Build", BufferCount, BUILDINGS, ClassFilter::All, r));
    }
    v
}
