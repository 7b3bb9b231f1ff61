//! Machine-readable record of a run: configuration, input fingerprints and a
//! content hash of every output file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::{list_files, SUMMARY_FILE};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub radius_schedule: String,
    pub config: RunConfig,
    /// External input files by config key.
    pub inputs: BTreeMap<String, FileEntry>,
    /// Output files relative to the output directory.
    pub files: BTreeMap<String, FileEntry>,
}

pub fn hash_file(path: &Path) -> Result<FileEntry, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileEntry {
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

fn portable(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn build_summary(out: &Path, cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let mut files = BTreeMap::new();
    for rel in list_files(out)? {
        if rel == Path::new(SUMMARY_FILE) {
            continue;
        }
        files.insert(portable(&rel), hash_file(&out.join(&rel))?);
    }
    let mut inputs = BTreeMap::new();
    if let Some(p) = &cfg.inputs {
        for (key, path) in [
            ("prices", &p.prices),
            ("weights", &p.weights),
            ("announcements", &p.announcements),
            ("rates", &p.rates),
        ] {
            inputs.insert(key.to_string(), hash_file(path)?);
        }
    }
    // the output location is not part of the result
    let mut echo = cfg.clone();
    echo.output = None;
    Ok(RunSummary {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        radius_schedule: format!(
            "max{{1, round({} * (1 - t/{}))}}",
            cfg.som.xi_start, cfg.som.iterations
        ),
        config: echo,
        inputs,
        files,
    })
}

pub fn write_summary(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let summary = build_summary(out, cfg)?;
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Validation(e.to_string()))?;
    text.push('\n');
    let path = out.join(SUMMARY_FILE);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

/// Re-hashes every listed file and returns the paths that no longer match.
pub fn verify_summary(out: &Path) -> Result<Vec<String>, CliError> {
    let path = out.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let summary: RunSummary = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut bad = Vec::new();
    for (rel, entry) in &summary.files {
        match hash_file(&out.join(rel)) {
            Ok(e) if &e == entry => {}
            _ => bad.push(rel.clone()),
        }
    }
    Ok(bad)
}
