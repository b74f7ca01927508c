use std::path::{Path, PathBuf};
use std::process::Command;

use lur_cli::commands::{
    cmd_evaluate, cmd_explain, cmd_exposure, cmd_features, cmd_predict_grid, cmd_synth, cmd_train, read_features,
    Outcome,
};
use lur_cli::config::{LoadedConfig, RunConfig};
use lur_cli::error::{CliResult, EXIT_RUNTIME, EXIT_VALIDATION};
use lur_cli::manifest::{sha256_file, Manifest};
use lur_core::models::MtryRule;

type StepFn = fn(&LoadedConfig, bool) -> CliResult<Outcome>;

const STEPS: [(&str, StepFn); 6] = [
    ("features", cmd_features),
    ("evaluate", cmd_evaluate),
    ("train", cmd_train),
    ("explain", cmd_explain),
    ("predict-grid", cmd_predict_grid),
    ("exposure", cmd_exposure),
];

/// Small dataset plus a config with one-point grids so the whole pipeline
/// runs in seconds.
fn small_dataset(dir: &Path, seed: u64) -> PathBuf {
    let path = cmd_synth(seed, 40, 2, dir, false).unwrap();
    let mut c = RunConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let g = &mut c.grid;
    g.lm_selection_limit = vec![3];
    g.enet_alpha = vec![0.5];
    g.enet_lambda = vec![0.1];
    g.svr_c = vec![10.0];
    g.svr_epsilon = vec![0.5];
    g.svr_gamma_per_d = vec![1.0];
    g.rf_n_trees = 30;
    g.rf_mtry = vec![MtryRule::Third];
    g.rf_min_node = vec![5];
    g.gbt_eta = vec![0.1];
    g.gbt_max_depth = vec![2, 3];
    g.gbt_rounds = vec![40];
    g.gbt_subsample = vec![0.8];
    g.gbt_reg_lambda = vec![1.0];
    c.cv.repeats = 2;
    c.cv.outer_folds = 4;
    c.cv.inner_folds = 3;
    c.train.folds = 3;
    c.moran.n_perm = 49;
    c.mapping.cell_size = 250.0;
    std::fs::write(&path, c.to_json().unwrap()).unwrap();
    path
}

fn run_all(lc: &LoadedConfig) -> Vec<Outcome> {
    STEPS
        .iter()
        .map(|(name, f)| f(lc, false).unwrap_or_else(|e| panic!("{name}: {e}")))
        .collect()
}

fn manifests(out: &Path) -> Vec<String> {
    STEPS
        .iter()
        .map(|(name, _)| std::fs::read_to_string(out.join(name).join("manifest.json")).unwrap())
        .collect()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lur"))
}

#[test]
fn full_pipeline_rerun_and_tamper() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_dataset(tmp.path(), 3);
    let lc = LoadedConfig::load(&cfg).unwrap();
    let out = lc.output_dir();

    let first = run_all(&lc);
    assert!(first.iter().all(|o| matches!(o, Outcome::Written(_))));
    for f in ["features/features.csv", "evaluate/cv_report.json", "evaluate/pairwise.csv", "train/model.json",
        "explain/shap.csv", "explain/importance.csv", "predict-grid/grid_city1.asc",
        "predict-grid/grid_city2.geojson", "exposure/exposure.csv"]
    {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let table = read_features(&out).unwrap();
    assert_eq!(table.laeq.len(), table.matrix.row_ids.len());

    let before = manifests(&out);
    let second = run_all(&lc);
    assert!(second.iter().all(|o| matches!(o, Outcome::UpToDate(_))), "{second:?}");
    assert_eq!(manifests(&out), before);

    // forcing a step recomputes it with identical bytes
    let m0 = Manifest::read(&out.join("train")).unwrap();
    assert!(matches!(cmd_train(&lc, true).unwrap(), Outcome::Written(_)));
    assert_eq!(Manifest::read(&out.join("train")).unwrap(), m0);

    // a changed config slice makes downstream steps refuse the stale output
    let mut changed = lc.clone();
    changed.config.train.folds = 4;
    let e = cmd_explain(&changed, false).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_VALIDATION);
    assert!(e.to_string().contains("stale train"), "{e}");

    // a modified intermediate is detected by every consumer
    let csv = out.join("features/features.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push('\n');
    std::fs::write(&csv, text).unwrap();
    let e = cmd_evaluate(&lc, false).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_VALIDATION);
    assert!(e.to_string().contains("hash mismatch"), "{e}");
    assert!(cmd_train(&lc, false).is_err());

    // the producer rewrites it and the chain is consistent again
    assert!(matches!(cmd_features(&lc, false).unwrap(), Outcome::Written(_)));
    assert!(matches!(cmd_evaluate(&lc, false).unwrap(), Outcome::UpToDate(_)));

    // changed raw input
    let sites = lc.resolve(&lc.config.inputs.sites);
    let mut text = std::fs::read_to_string(&sites).unwrap();
    text.push('\n');
    std::fs::write(&sites, text).unwrap();
    let e = cmd_evaluate(&lc, false).unwrap_err();
    assert!(e.to_string().contains("input"), "{e}");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ca = small_dataset(a.path(), 11);
    let cb = small_dataset(b.path(), 11);
    small_dataset(c.path(), 12);
    for f in ["sites.csv", "roads.geojson", "landuse.geojson", "population_city1.asc", "config.json"] {
        assert_eq!(sha256_file(&a.path().join(f)).unwrap(), sha256_file(&b.path().join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        sha256_file(&a.path().join("sites.csv")).unwrap(),
        sha256_file(&c.path().join("sites.csv")).unwrap()
    );

    let la = LoadedConfig::load(&ca).unwrap();
    let lb = LoadedConfig::load(&cb).unwrap();
    run_all(&la);
    run_all(&lb);
    for (name, _) in STEPS {
        let ma = Manifest::read(&la.output_dir().join(name)).unwrap();
        let mb = Manifest::read(&lb.output_dir().join(name)).unwrap();
        assert_eq!(ma.outputs, mb.outputs, "{name}");
    }
}

#[test]
fn synth_refuses_non_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let e = cmd_synth(1, 20, 1, tmp.path(), false).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_VALIDATION);
    assert!(cmd_synth(1, 20, 1, tmp.path(), true).is_ok());
    assert!(tmp.path().join("keep.txt").is_file());
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |c: &mut Command| c.output().unwrap().status.code().unwrap();

    assert_eq!(code(bin().arg("--help")), 0);
    assert_eq!(code(bin().arg("--version")), 0);
    assert_eq!(code(bin().arg("frobnicate")), EXIT_VALIDATION);
    assert_eq!(code(bin().args(["features", "--config", "/nonexistent/config.json"])), EXIT_VALIDATION);

    let data = tmp.path().join("data");
    let out = bin()
        .args(["synth", "--seed", "5", "--n-sites", "20", "--cities", "1", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        code(bin().args(["synth", "--seed", "5", "--n-sites", "20", "--out"]).arg(&data)),
        EXIT_VALIDATION
    );
    let cfg = data.join("config.json");

    // downstream step without its upstream manifest
    let out = bin().args(["exposure", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    assert_eq!(code(bin().args(["--threads", "0", "features", "--config"]).arg(&cfg)), EXIT_VALIDATION);

    // output directory below a regular file cannot be created
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out = bin()
        .args(["features", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(blocker.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_RUNTIME), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .args(["--threads", "1", "features", "--config"])
        .arg(&cfg)
        .env("LUR_OUT", tmp.path().join("env_out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("env_out/features/features.csv").is_file());
}
