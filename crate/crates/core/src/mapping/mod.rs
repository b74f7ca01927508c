//! Grid prediction over city extents and population exposure by band.

mod exposure;
mod grid;

pub use exposure::{
    assign_population, exposure_table, write_exposure_csv, ExposureRow, ExposureTable, GroupExposure,
    DEFAULT_THRESHOLDS,
};
pub use grid::{
    import_ascii_grid, make_grid, predict_grid, CellFailure, NoiseGrid, DEFAULT_CELL_SIZE, MAX_FAILED_FRACTION,
};
