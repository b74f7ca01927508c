//! Run configuration (JSON).
//!
//! Relative paths are resolved against the directory holding the config
//! file. Only the output directory and the thread count can be overridden
//! from the environment (`LUR_OUT`, `LUR_THREADS`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lur_core::features::{default_specs, validate_specs, PredictorSpec, DEFAULT_DISTANCE_CEILING};
use lur_core::mapping::{DEFAULT_CELL_SIZE, DEFAULT_THRESHOLDS};
use lur_core::models::{Family, GridSpec};
use lur_core::spatialstats::DEFAULT_PERMUTATIONS;
use lur_core::validation::{INNER_FOLDS, OUTER_FOLDS, REPEATS};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub sites: PathBuf,
    pub roads: PathBuf,
    pub landuse: PathBuf,
    pub buildings: PathBuf,
    pub imperviousness: PathBuf,
    pub boundaries: PathBuf,
    /// Population raster per city label.
    pub population: BTreeMap<String, PathBuf>,
    #[serde(default = "default_class_field")]
    pub road_class_field: String,
    #[serde(default = "default_landuse_field")]
    pub landuse_class_field: String,
    #[serde(default = "default_class_field")]
    pub building_class_field: String,
    #[serde(default = "default_city_field")]
    pub city_field: String,
}

fn default_class_field() -> String {
    "class".into()
}
fn default_landuse_field() -> String {
    "code_2018".into()
}
fn default_city_field() -> String {
    "city".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub label: String,
    pub family: Family,
}

fn default_models() -> Vec<ModelConfig> {
    Family::ALL
        .iter()
        .map(|&f| ModelConfig {
            label: f.name().into(),
            family: f,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub repeats: usize,
    pub outer_folds: usize,
    pub inner_folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            repeats: REPEATS,
            outer_folds: OUTER_FOLDS,
            inner_folds: INNER_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Label of the model (from `models`) fitted on all sites.
    pub model: String,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: "GBT".into(),
            folds: INNER_FOLDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapBackground {
    /// Node covers recorded at training time.
    Training,
    /// Covers recounted from the site predictor rows.
    Sites,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub top_k: usize,
    pub background: ShapBackground,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            top_k: 8,
            background: ShapBackground::Training,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoranConfig {
    pub n_perm: usize,
    pub power: f64,
    pub row_standardize: bool,
    /// CV repeat whose out-of-fold residuals are tested.
    pub repeat: usize,
}

impl Default for MoranConfig {
    fn default() -> Self {
        Self {
            n_perm: DEFAULT_PERMUTATIONS,
            power: 1.0,
            row_standardize: true,
            repeat: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub cell_size: f64,
    pub thresholds: Vec<f64>,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            cell_size: DEFAULT_CELL_SIZE,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

fn default_ceiling() -> f64 {
    DEFAULT_DISTANCE_CEILING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    /// Candidate predictors; the built-in list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors: Option<Vec<PredictorSpec>>,
    #[serde(default = "default_ceiling")]
    pub distance_ceiling: f64,
    #[serde(default = "default_models")]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub moran: MoranConfig,
    #[serde(default)]
    pub mapping: MappingConfig,
}

impl RunConfig {
    /// Config with default settings for a dataset laid out by `lur synth`.
    pub fn for_dataset(seed: u64, population: BTreeMap<String, PathBuf>) -> Self {
        use lur_core::synth::files;
        Self {
            seed,
            output_dir: "out".into(),
            inputs: Inputs {
                sites: files::SITES.into(),
                roads: files::ROADS.into(),
                landuse: files::LANDUSE.into(),
                buildings: files::BUILDINGS.into(),
                imperviousness: files::IMPERVIOUSNESS.into(),
                boundaries: files::BOUNDARIES.into(),
                population,
                road_class_field: lur_core::synth::ROAD_CLASS_FIELD.into(),
                landuse_class_field: lur_core::synth::LANDUSE_CLASS_FIELD.into(),
                building_class_field: lur_core::synth::ROAD_CLASS_FIELD.into(),
                city_field: lur_core::synth::CITY_FIELD.into(),
            },
            predictors: None,
            distance_ceiling: DEFAULT_DISTANCE_CEILING,
            models: default_models(),
            grid: GridSpec::default(),
            cv: CvConfig::default(),
            train: TrainConfig::default(),
            explain: ExplainConfig::default(),
            moran: MoranConfig::default(),
            mapping: MappingConfig::default(),
        }
    }

    pub fn specs(&self) -> Vec<PredictorSpec> {
        self.predictors.clone().unwrap_or_else(default_specs)
    }

    pub fn model(&self, label: &str) -> CliResult<&ModelConfig> {
        self.models
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| CliError::validation(format!("model {label} is not listed in models")))
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Check settings that do not need the file system.
    pub fn validate(&self) -> CliResult<()> {
        validate_specs(&self.specs())?;
        if !(self.distance_ceiling > 0.0) {
            return Err(CliError::validation("distance_ceiling must be > 0"));
        }
        if self.models.is_empty() {
            return Err(CliError::validation("models must not be empty"));
        }
        let mut labels: Vec<&str> = self.models.iter().map(|m| m.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::validation("model labels must be unique"));
        }
        self.model(&self.train.model)?;
        if self.cv.repeats == 0 || self.cv.outer_folds < 2 || self.cv.inner_folds < 2 || self.train.folds < 2 {
            return Err(CliError::validation("CV needs >= 1 repeat and >= 2 folds"));
        }
        if self.moran.n_perm == 0 || self.moran.repeat >= self.cv.repeats {
            return Err(CliError::validation("moran.n_perm must be > 0 and moran.repeat < cv.repeats"));
        }
        if !(self.mapping.cell_size > 0.0) || self.mapping.thresholds.is_empty() {
            return Err(CliError::validation("mapping needs cell_size > 0 and at least one threshold"));
        }
        if self.inputs.population.is_empty() {
            return Err(CliError::validation("inputs.population must name at least one city"));
        }
        Ok(())
    }
}

/// A config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub config_path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let config = RunConfig::from_json(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            base_dir,
            config_path: path.to_path_buf(),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    /// Every raw input path (resolved), after checking that it exists.
    pub fn check_inputs(&self) -> CliResult<()> {
        let i = &self.config.inputs;
        let mut paths = vec![&i.sites, &i.roads, &i.landuse, &i.buildings, &i.imperviousness, &i.boundaries];
        paths.extend(i.population.values());
        for p in paths {
            let r = self.resolve(p);
            if !r.is_file() {
                return Err(CliError::validation(format!("input file {} not found", r.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let mut pop = BTreeMap::new();
        pop.insert("a".to_string(), PathBuf::from("pop_a.asc"));
        let c = RunConfig::for_dataset(7, pop);
        c.validate().unwrap();
        let back = RunConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        let minimal = r#"{"seed": 1, "output_dir": "o", "inputs": {"sites": "s.csv", "roads": "r", "landuse": "l",
            "buildings": "b", "imperviousness": "i", "boundaries": "bd", "population": {"a": "p"}}}"#;
        let m = RunConfig::from_json(minimal).unwrap();
        assert_eq!(m.models.len(), 5);
        assert_eq!(m.grid, GridSpec::default());
        assert!(RunConfig::from_json(r#"{"seed": 1}"#).is_err());
    }

    #[test]
    fn unknown_train_model_rejected() {
        let mut c = RunConfig::for_dataset(1, [("a".to_string(), PathBuf::from("p"))].into());
        c.train.model = "XGB".into();
        assert!(c.validate().is_err());
    }
}
