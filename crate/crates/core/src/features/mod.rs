//! Land-use predictor extraction.

mod extract;
mod matrix;
mod spec;

pub use extract::{
    count_within_buffer, distance_to_nearest, length_within_buffer, raster_mean_within_buffer, warm_indexes,
    FeatureEngine,
};
pub use matrix::{
    build_predictor_matrix, cache_key, column_units, load_cached, store_cached, Location, PredictorMatrix,
    DEFAULT_DISTANCE_CEILING,
};
pub use spec::{
    default_specs, validate_specs, Axis, PredictorKind, PredictorSpec, Unit, BUFFER_RADII, BUILDINGS,
    IMPERVIOUSNESS, LANDUSE, ROADS,
};
