//! Land-use regression toolkit for traffic-noise exposure modelling.
//!
//! The crate turns point noise measurements and urban geodata into trained,
//! cross-validated and explained regression models, and from there into
//! gridded noise surfaces and population-exposure tables.
//!
//! # Module map
//!
//! - [`geodata`] - site measurements, vector/raster layers, spatial index
//! - [`features`] - buffer, distance and zonal predictors at arbitrary points
//! - [`preprocess`] - Yeo-Johnson transform, standardization, VIF screening
//! - [`models`] - stepwise OLS, elastic net, RBF SVR, random forest, boosted trees
//! - [`validation`] - repeated nested k-fold CV, metrics, rank-sum tests
//! - [`explain`] - TreeSHAP, exact enumeration, importance and plot data
//! - [`spatialstats`] - Moran's I with inverse-distance weights
//! - [`mapping`] - prediction grids, exposure bands, grid export
//! - [`synth`] - seeded synthetic cities with a known ground-truth surface

pub mod error;
pub mod explain;
pub mod features;
pub mod geodata;
pub mod geometry;
pub mod linalg;
pub mod mapping;
pub mod matrix;
pub mod models;
pub mod preprocess;
pub mod rng;
pub mod spatialstats;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
pub use matrix::Matrix;
