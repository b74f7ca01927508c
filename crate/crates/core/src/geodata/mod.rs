//! Input data: monitoring sites, vector and raster layers, spatial index.
//!
//! All geometry is planar in one projected CRS; nothing is reprojected.

mod index;
mod layer;
mod raster_io;
mod sites;
mod vector_io;

pub use index::{geometry_intersects_box, SpatialIndex};
pub use layer::{
    ClassFilter, GeoLayer, Geometry, LayerKind, Raster, VectorFeature, VectorLayer, Vocabulary,
    ROAD_CLASSES, URBAN_ATLAS_CODES,
};
pub use raster_io::{
    format_ascii_grid, load_raster, parse_ascii_grid, validate_role, write_raster, RasterRole,
    DEFAULT_NODATA,
};
pub use sites::{
    load_sites, read_sites, write_sites, RejectedRow, SiteCollection, SiteMeasurement, LAEQ_RANGE,
};
pub use vector_io::{
    feature, load_vector_layer, parse_vector_layer, to_feature_collection, write_vector_layer,
    LoadStats,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Named collection of loaded layers sharing one planar CRS.
#[derive(Debug, Clone, Default)]
pub struct LayerSet {
    layers: BTreeMap<String, GeoLayer>,
    crs: Option<String>,
}

impl LayerSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a layer; a CRS declaration that differs from an earlier one is
    /// rejected.
    pub fn insert(&mut self, name: impl Into<String>, layer: GeoLayer) -> Result<()> {
        let name = name.into();
        if let GeoLayer::Vector(v) = &layer {
            if let Some(c) = &v.crs {
                match &self.crs {
                    Some(existing) if existing != c => {
                        return Err(Error::invalid(format!(
                            "layer {name} declares CRS {c}, other layers use {existing}"
                        )))
                    }
                    _ => self.crs = Some(c.clone()),
                }
            }
        }
        self.layers.insert(name, layer);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&GeoLayer> {
        self.layers
            .get(name)
            .ok_or_else(|| Error::invalid(format!("layer {name} not loaded")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn crs(&self) -> Option<&str> {
        self.crs.as_deref()
    }
}
