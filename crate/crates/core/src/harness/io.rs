//! CSV tables with a run-manifest sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of one output file, written next to it as
/// `<file>.manifest.toml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub file: String,
    pub rows: usize,
    /// SHA-256 of the canonical JSON form of the generating config.
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl Manifest {
    pub fn new(config_hash: &str, seeds: &[u64]) -> Self {
        Self {
            artifact: ARTIFACT.into(),
            version: VERSION.into(),
            file: String::new(),
            rows: 0,
            config_hash: config_hash.into(),
            seeds: seeds.to_vec(),
        }
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    path.with_file_name(name)
}

/// Write `rows` with a header line, plus the manifest sidecar.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], manifest: &Manifest) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let m = Manifest {
        file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
        rows: rows.len(),
        ..manifest.clone()
    };
    let text = toml::to_string(&m).map_err(|e| HarnessError::Parse(e.to_string()))?;
    fs::write(manifest_path(path), text)?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Manifest of the data file at `path`.
pub fn read_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    let text = fs::read_to_string(manifest_path(path))?;
    toml::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))
}
