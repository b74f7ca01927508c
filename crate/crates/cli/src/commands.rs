//! Subcommand implementations. Each step writes into `<output_dir>/<step>/`
//! together with a manifest; downstream steps verify upstream manifests
//! before reading anything.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use lur_core::explain::{
    beeswarm_data, dependence_data, enumerate_shapley, importance_by_city, importance_ranking, model_function,
    tree_shap, write_beeswarm_csv, write_dependence_csv, write_importance_csv, write_shap_csv, Background,
    ShapMatrix, ENUMERATION_LIMIT,
};
use lur_core::features::{
    build_predictor_matrix, column_units, Location, PredictorMatrix, BUILDINGS, IMPERVIOUSNESS, LANDUSE, ROADS,
};
use lur_core::geodata::{
    load_raster, load_sites, load_vector_layer, GeoLayer, Geometry, LayerKind, LayerSet, RasterRole, Vocabulary,
};
use lur_core::geometry::{Polygon, Pt};
use lur_core::mapping::{exposure_table, make_grid, predict_grid, write_exposure_csv, NoiseGrid};
use lur_core::models::{Fitted, TrainedModel};
use lur_core::spatialstats::inverse_distance_weights;
use lur_core::synth;
use lur_core::validation::{
    make_fold_plan_with, nested_cv, select_and_fit, write_city_metrics_csv, write_fold_metrics_csv,
    write_pairwise_csv, write_plot_data_csv, write_report_json, CvEntry,
};
use lur_core::Matrix;

use crate::config::{LoadedConfig, RunConfig, ShapBackground};
use crate::error::{CliError, CliResult};
use crate::manifest::{hash_inputs, hash_json, hash_outputs, sha256_file, verify_step, FileHash, Manifest, TOOLKIT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Features,
    Evaluate,
    Train,
    Explain,
    PredictGrid,
    Exposure,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Features => "features",
            Step::Evaluate => "evaluate",
            Step::Train => "train",
            Step::Explain => "explain",
            Step::PredictGrid => "predict-grid",
            Step::Exposure => "exposure",
        }
    }

    pub fn upstream(self) -> &'static [Step] {
        match self {
            Step::Features => &[],
            Step::Evaluate | Step::Train => &[Step::Features],
            Step::Explain => &[Step::Train, Step::Features],
            Step::PredictGrid => &[Step::Train],
            Step::Exposure => &[Step::PredictGrid],
        }
    }

    /// Raw inputs the step reads directly.
    fn inputs(self, c: &RunConfig) -> Vec<&Path> {
        let i = &c.inputs;
        match self {
            Step::Features => vec![&i.sites, &i.roads, &i.landuse, &i.buildings, &i.imperviousness],
            Step::PredictGrid => vec![&i.roads, &i.landuse, &i.buildings, &i.imperviousness, &i.boundaries],
            Step::Exposure => i.population.values().map(PathBuf::as_path).collect(),
            _ => vec![],
        }
    }

    /// The part of the config that determines this step's outputs.
    pub fn config_slice(self, c: &RunConfig) -> serde_json::Value {
        let i = &c.inputs;
        match self {
            Step::Features => json!({
                "inputs": [&i.sites, &i.roads, &i.landuse, &i.buildings, &i.imperviousness],
                "fields": [&i.road_class_field, &i.landuse_class_field, &i.building_class_field],
                "predictors": c.specs(),
                "distance_ceiling": c.distance_ceiling,
            }),
            Step::Evaluate => json!({
                "features": Step::Features.config_slice(c),
                "seed": c.seed, "models": c.models, "grid": c.grid, "cv": c.cv, "moran": c.moran,
            }),
            Step::Train => json!({
                "features": Step::Features.config_slice(c),
                "seed": c.seed, "models": c.models, "grid": c.grid, "train": c.train,
            }),
            Step::Explain => json!({"train": Step::Train.config_slice(c), "explain": c.explain}),
            Step::PredictGrid => json!({
                "train": Step::Train.config_slice(c),
                "boundaries": &i.boundaries, "city_field": &i.city_field,
                "cell_size": c.mapping.cell_size,
            }),
            Step::Exposure => json!({
                "grid": Step::PredictGrid.config_slice(c),
                "population": &i.population, "thresholds": c.mapping.thresholds,
            }),
        }
    }

    pub fn config_hash(self, c: &RunConfig) -> String {
        hash_json(&self.config_slice(c))
    }
}

/// Site predictors with their levels and city labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub matrix: PredictorMatrix,
    pub laeq: Vec<f64>,
    pub cities: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn dir_is_nonempty(dir: &Path) -> bool {
    std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

/// Outcome of a step run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Written(PathBuf),
    UpToDate(PathBuf),
}

impl Outcome {
    pub fn dir(&self) -> &Path {
        match self {
            Outcome::Written(p) | Outcome::UpToDate(p) => p,
        }
    }
}

/// Verify upstream steps, skip when the existing outputs are current (unless
/// `force`), otherwise run `body` and write the manifest.
fn run_step<F>(lc: &LoadedConfig, step: Step, force: bool, body: F) -> CliResult<Outcome>
where
    F: FnOnce(&Path) -> CliResult<Vec<String>>,
{
    lc.check_inputs()?;
    let c = &lc.config;
    let out = lc.output_dir();
    let upstream: Vec<FileHash> = step
        .upstream()
        .iter()
        .map(|u| verify_step(lc, &out, u.name(), &u.config_hash(c)))
        .collect::<CliResult<_>>()?;
    let dir = out.join(step.name());
    let config_hash = step.config_hash(c);
    if !force {
        if let Ok(m) = Manifest::read(&dir) {
            if m.upstream == upstream
                && m.toolkit_version == TOOLKIT_VERSION
                && verify_step(lc, &out, step.name(), &config_hash).is_ok()
            {
                log::info!("{} is up to date", step.name());
                return Ok(Outcome::UpToDate(dir));
            }
        }
    }
    create_dir(&dir)?;
    let inputs = hash_inputs(lc, &step.inputs(c))?;
    let names = body(&dir)?;
    Manifest {
        step: step.name().into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash,
        inputs,
        upstream,
        outputs: hash_outputs(&dir, &names)?,
    }
    .write(&dir)?;
    Ok(Outcome::Written(dir))
}

pub fn load_layers(lc: &LoadedConfig) -> CliResult<LayerSet> {
    let i = &lc.config.inputs;
    let mut set = LayerSet::new();
    let vectors = [
        (ROADS, &i.roads, LayerKind::Polyline, &i.road_class_field, Vocabulary::Roads),
        (LANDUSE, &i.landuse, LayerKind::Polygon, &i.landuse_class_field, Vocabulary::UrbanAtlas),
        (BUILDINGS, &i.buildings, LayerKind::Point, &i.building_class_field, Vocabulary::Any),
    ];
    for (name, path, kind, field, vocab) in vectors {
        let (layer, stats) = load_vector_layer(lc.resolve(path), kind, field, &vocab)?;
        if stats.skipped() > 0 {
            log::warn!("{name}: skipped {} features ({stats:?})", stats.skipped());
        }
        set.insert(name, GeoLayer::Vector(layer))?;
    }
    let imp = load_raster(lc.resolve(&i.imperviousness), RasterRole::Imperviousness)?;
    set.insert(IMPERVIOUSNESS, GeoLayer::Raster(imp))?;
    Ok(set)
}

pub fn read_features(out: &Path) -> CliResult<FeatureTable> {
    read_json(&out.join(Step::Features.name()).join("features.json"))
}

pub fn read_model(out: &Path) -> CliResult<TrainedModel> {
    Ok(TrainedModel::load(out.join(Step::Train.name()).join("model.json"))?)
}

pub fn read_grids(out: &Path) -> CliResult<Vec<NoiseGrid>> {
    read_json(&out.join(Step::PredictGrid.name()).join("grids.json"))
}

pub fn cmd_synth(seed: u64, n_sites: usize, n_cities: usize, out: &Path, force: bool) -> CliResult<PathBuf> {
    if dir_is_nonempty(out) && !force {
        return Err(CliError::validation(format!(
            "output directory {} is not empty (use --force to overwrite)",
            out.display()
        )));
    }
    let ds = synth::generate(seed, n_sites, n_cities)?;
    let written = ds.write(out)?;
    let population: BTreeMap<String, PathBuf> = ds
        .cities
        .iter()
        .map(|c| (c.name.clone(), PathBuf::from(synth::files::population(&c.name))))
        .collect();
    let config = RunConfig::for_dataset(seed, population);
    let config_path = out.join("config.json");
    std::fs::write(&config_path, config.to_json()?)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", config_path.display())))?;
    let mut names: Vec<String> = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push("config.json".into());
    Manifest {
        step: "synth".into(),
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash: hash_json(&json!({"seed": seed, "n_sites": n_sites, "n_cities": n_cities})),
        inputs: Vec::new(),
        upstream: Vec::new(),
        outputs: hash_outputs(out, &names)?,
    }
    .write(out)?;
    Ok(config_path)
}

pub fn cmd_features(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::Features, force, |dir| {
        let c = &lc.config;
        let sites = load_sites(lc.resolve(&c.inputs.sites))?;
        for r in &sites.rejected {
            log::warn!("sites: rejected row {}: {}", r.row, r.message);
        }
        let layers = load_layers(lc)?;
        let locations: Vec<Location> = sites
            .sites
            .iter()
            .map(|s| Location::new(s.site_id.clone(), s.x, s.y))
            .collect();
        let matrix = build_predictor_matrix(&locations, &c.specs(), &layers, c.distance_ceiling)?;
        let table = FeatureTable {
            matrix,
            laeq: sites.sites.iter().map(|s| s.mean_laeq).collect(),
            cities: sites.sites.iter().map(|s| s.city.clone()).collect(),
        };
        write_json(&dir.join("features.json"), &table)?;
        table.matrix.write_csv(dir.join("features.csv"))?;
        Ok(vec!["features.json".into(), "features.csv".into()])
    })
}

fn site_points(ft: &FeatureTable) -> CliResult<Vec<Pt>> {
    let xs = ft.matrix.column("X")?;
    let ys = ft.matrix.column("Y")?;
    Ok(xs.into_iter().zip(ys).map(|(x, y)| Pt::new(x, y)).collect())
}

pub fn cmd_evaluate(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::Evaluate, force, |dir| {
        let c = &lc.config;
        let ft = read_features(&lc.output_dir())?;
        let names = &ft.matrix.column_names;
        let d = names.len();
        let entries: Vec<CvEntry> = c
            .models
            .iter()
            .map(|m| CvEntry::new(m.label.clone(), c.grid.grid(m.family, d)))
            .collect();
        let plan = make_fold_plan_with(ft.laeq.len(), c.seed, c.cv.repeats, c.cv.outer_folds, c.cv.inner_folds)?;
        let mut report = nested_cv(&ft.matrix.values, names, &ft.laeq, &ft.cities, &entries, &plan)?;
        let w = inverse_distance_weights(&site_points(&ft)?, c.moran.power, c.moran.row_standardize)?;
        report.add_residual_diagnostics(&ft.laeq, &w, c.moran.repeat, c.moran.n_perm, c.seed)?;
        for s in &report.summaries {
            println!(
                "{:<6} RMSE {:.3} (sd {:.3})  MAE {:.3}  R2 {}",
                s.label,
                s.mean_rmse,
                s.sd_rmse,
                s.mean_mae,
                s.mean_r2.map_or("n/a".to_string(), |v| format!("{v:.3}"))
            );
        }
        if let Some(cmp) = &report.comparison {
            println!("lowest mean RMSE: {}", cmp.winner);
        }
        write_report_json(&report, dir.join("cv_report.json"))?;
        write_fold_metrics_csv(&report, dir.join("fold_metrics.csv"))?;
        write_city_metrics_csv(&report, dir.join("city_metrics.csv"))?;
        write_pairwise_csv(&report, dir.join("pairwise.csv"))?;
        write_plot_data_csv(&report, dir.join("plot_data.csv"))?;
        Ok(["cv_report.json", "fold_metrics.csv", "city_metrics.csv", "pairwise.csv", "plot_data.csv"]
            .map(String::from)
            .to_vec())
    })
}

pub fn cmd_train(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::Train, force, |dir| {
        let c = &lc.config;
        let ft = read_features(&lc.output_dir())?;
        let m = c.model(&c.train.model)?;
        let entry = CvEntry::new(m.label.clone(), c.grid.grid(m.family, ft.matrix.column_names.len()));
        let (selection, model) =
            select_and_fit(&ft.matrix.values, &ft.matrix.column_names, &ft.laeq, &entry, c.train.folds, c.seed)?;
        model.save(dir.join("model.json"))?;
        write_json(&dir.join("selection.json"), &selection)?;
        println!("trained {} with {:?}", m.label, selection.grid[selection.grid_index]);
        Ok(vec!["model.json".into(), "selection.json".into()])
    })
}

/// Exact enumeration for non-tree models over a small feature set, with the
/// first (up to) 50 sites as background.
fn enumerated_shap(model: &TrainedModel, ft: &FeatureTable) -> CliResult<ShapMatrix> {
    let names = &model.pipeline.feature_names;
    if names.len() > ENUMERATION_LIMIT {
        return Err(CliError::validation(format!(
            "{} is not a tree ensemble and has {} predictors; exact enumeration supports at most {}",
            model.family,
            names.len(),
            ENUMERATION_LIMIT
        )));
    }
    let cols: Vec<usize> = names
        .iter()
        .map(|n| ft.matrix.column_index(n).ok_or_else(|| CliError::validation(format!("missing column {n}"))))
        .collect::<CliResult<_>>()?;
    let x = ft.matrix.values.select_columns(&cols);
    let bg = x.select_rows(&(0..x.n_rows().min(50)).collect::<Vec<_>>());
    let f = model_function(model);
    let mut values = Matrix::zeros(x.n_rows(), names.len());
    for i in 0..x.n_rows() {
        let phi = enumerate_shapley(&f, x.row(i), &bg, ENUMERATION_LIMIT)?;
        values.row_mut(i).copy_from_slice(&phi);
    }
    let base = bg.rows().map(&f).sum::<f64>() / bg.n_rows() as f64;
    Ok(ShapMatrix {
        base_value: base,
        feature_names: names.clone(),
        row_ids: ft.matrix.row_ids.clone(),
        cities: ft.cities.clone(),
        predictions: model.predict(&x, names)?,
        values,
        feature_values: x,
    })
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn cmd_explain(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::Explain, force, |dir| {
        let c = &lc.config;
        let out = lc.output_dir();
        let ft = read_features(&out)?;
        let model = read_model(&out)?;
        let names = &ft.matrix.column_names;
        let shap = match model.fitted {
            Fitted::Trees(_) => {
                let background = match c.explain.background {
                    ShapBackground::Training => Background::TrainingCovers,
                    ShapBackground::Sites => Background::Rows {
                        x: &ft.matrix.values,
                        names,
                    },
                };
                tree_shap(&model, &ft.matrix.values, names, &ft.matrix.row_ids, &ft.cities, background)?
            }
            _ => enumerated_shap(&model, &ft)?,
        };
        let global = importance_ranking(&shap, Some(c.explain.top_k));
        let by_city = importance_by_city(&shap, Some(c.explain.top_k));
        write_json(&dir.join("shap.json"), &shap)?;
        write_shap_csv(&shap, dir.join("shap.csv"))?;
        write_importance_csv(&global, &by_city, dir.join("importance.csv"))?;
        write_beeswarm_csv(&beeswarm_data(&shap), dir.join("beeswarm.csv"))?;
        let mut files: Vec<String> = ["shap.json", "shap.csv", "importance.csv", "beeswarm.csv"].map(String::from).to_vec();
        for imp in &global {
            let name = format!("dependence_{}.csv", file_safe(&imp.feature));
            write_dependence_csv(&imp.feature, &dependence_data(&shap, &imp.feature)?, dir.join(&name))?;
            files.push(name);
        }
        println!(
            "explained {} rows; max additivity error {:.3e}; top predictors: {}",
            shap.values.n_rows(),
            shap.max_additivity_error(),
            global.iter().map(|i| i.feature.as_str()).collect::<Vec<_>>().join(", ")
        );
        Ok(files)
    })
}

/// Largest polygon per city label in the boundary layer.
fn boundaries(lc: &LoadedConfig) -> CliResult<BTreeMap<String, Polygon>> {
    let i = &lc.config.inputs;
    let (layer, _) = load_vector_layer(lc.resolve(&i.boundaries), LayerKind::Polygon, &i.city_field, &Vocabulary::Any)?;
    let mut out: BTreeMap<String, Polygon> = BTreeMap::new();
    for f in layer.features {
        if let Geometry::Polygon(p) = f.geometry {
            match out.get(&f.class_tag) {
                Some(existing) if existing.area() >= p.area() => {}
                _ => {
                    out.insert(f.class_tag, p);
                }
            }
        }
    }
    Ok(out)
}

pub fn cmd_predict_grid(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::PredictGrid, force, |dir| {
        let c = &lc.config;
        let model = read_model(&lc.output_dir())?;
        let specs = c.specs();
        if column_units(&specs).0 != model.pipeline.feature_names {
            return Err(CliError::validation("predictor specs differ from those the model was trained on"));
        }
        let layers = load_layers(lc)?;
        let mut grids = Vec::new();
        let mut files = vec!["grids.json".to_string()];
        for (city, poly) in boundaries(lc)? {
            let skeleton = make_grid(&city, &poly, c.mapping.cell_size)?;
            let grid = predict_grid(&model, &skeleton, &layers, &specs, c.distance_ceiling)?;
            let stem = format!("grid_{}", file_safe(&city));
            grid.export(dir.join(format!("{stem}.asc")), "asc")?;
            grid.export(dir.join(format!("{stem}.geojson")), "geojson")?;
            files.push(format!("{stem}.asc"));
            files.push(format!("{stem}.geojson"));
            println!(
                "{city}: {} cells predicted, {} failed",
                grid.values.iter().filter(|v| v.is_some()).count(),
                grid.failures.len()
            );
            grids.push(grid);
        }
        write_json(&dir.join("grids.json"), &grids)?;
        Ok(files)
    })
}

pub fn cmd_exposure(lc: &LoadedConfig, force: bool) -> CliResult<Outcome> {
    run_step(lc, Step::Exposure, force, |dir| {
        let c = &lc.config;
        let grids = read_grids(&lc.output_dir())?;
        let mut pops = Vec::new();
        for g in &grids {
            let path = c
                .inputs
                .population
                .get(&g.city)
                .ok_or_else(|| CliError::validation(format!("no population raster for city {}", g.city)))?;
            pops.push(load_raster(lc.resolve(path), RasterRole::Population)?);
        }
        let pairs: Vec<_> = grids.iter().zip(&pops).collect();
        let table = exposure_table(&pairs, &c.mapping.thresholds)?;
        write_json(&dir.join("exposure.json"), &table)?;
        write_exposure_csv(&table, dir.join("exposure.csv"))?;
        for r in &table.total.rows {
            println!(">{:<4} {:>10.0} {:>6.2}%", r.threshold, r.population, r.percent);
        }
        Ok(vec!["exposure.json".into(), "exposure.csv".into()])
    })
}

/// Hash of a step's manifest file, for comparing runs.
pub fn manifest_hash(out: &Path, step: Step) -> CliResult<String> {
    sha256_file(&out.join(step.name()).join(crate::manifest::MANIFEST_FILE))
}
