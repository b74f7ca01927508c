//! Pipeline orchestration for the land-use regression toolkit.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
