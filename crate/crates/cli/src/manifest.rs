//! Per-step manifests: hashes of inputs, upstream manifests, config slice
//! and outputs. A downstream step refuses to run on anything that no longer
//! matches.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub step: String,
    pub toolkit_version: String,
    pub config_hash: String,
    /// Raw input files, paths as written in the config.
    pub inputs: Vec<FileHash>,
    /// Manifests of upstream steps, paths relative to the output directory.
    pub upstream: Vec<FileHash>,
    /// Files written by the step, paths relative to the step directory.
    pub outputs: Vec<FileHash>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

pub fn hash_json(v: &serde_json::Value) -> String {
    sha256_bytes(&serde_json::to_vec(v).expect("JSON value serializes"))
}

impl Manifest {
    pub fn write(&self, step_dir: &Path) -> CliResult<()> {
        let p = step_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&p, text).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", p.display())))
    }

    pub fn read(step_dir: &Path) -> CliResult<Self> {
        let p = step_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(|_| {
            CliError::validation(format!("{} is missing; run the step that produces it first", p.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{} is corrupt: {e}", p.display())))
    }
}

/// Hash the raw inputs named in the config.
pub fn hash_inputs(cfg: &LoadedConfig, paths: &[&Path]) -> CliResult<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.display().to_string(),
                sha256: sha256_file(&cfg.resolve(p))?,
            })
        })
        .collect()
}

pub fn hash_outputs(step_dir: &Path, names: &[String]) -> CliResult<Vec<FileHash>> {
    names
        .iter()
        .map(|n| {
            Ok(FileHash {
                path: n.clone(),
                sha256: sha256_file(&step_dir.join(n))?,
            })
        })
        .collect()
}

/// Check an upstream step against the current config and files and return
/// the hash of its manifest.
pub fn verify_step(cfg: &LoadedConfig, out_dir: &Path, step: &str, config_hash: &str) -> CliResult<FileHash> {
    let dir = out_dir.join(step);
    let m = Manifest::read(&dir)?;
    let rerun = format!("re-run `lur {step}`");
    if m.config_hash != config_hash {
        return Err(CliError::validation(format!(
            "stale {step} output: configuration changed since it ran; {rerun}"
        )));
    }
    for f in &m.inputs {
        if sha256_file(&cfg.resolve(Path::new(&f.path)))? != f.sha256 {
            return Err(CliError::validation(format!(
                "stale {step} output: input {} changed since it ran; {rerun}",
                f.path
            )));
        }
    }
    for f in &m.upstream {
        if sha256_file(&out_dir.join(&f.path))? != f.sha256 {
            return Err(CliError::validation(format!(
                "stale {step} output: upstream {} changed since it ran; {rerun}",
                f.path
            )));
        }
    }
    for f in &m.outputs {
        if sha256_file(&dir.join(&f.path))? != f.sha256 {
            return Err(CliError::validation(format!(
                "hash mismatch: {step}/{} does not match its manifest (corrupted or modified); {rerun}",
                f.path
            )));
        }
    }
    let path = format!("{step}/{MANIFEST_FILE}");
    Ok(FileHash {
        sha256: sha256_file(&out_dir.join(&path))?,
        path,
    })
}
