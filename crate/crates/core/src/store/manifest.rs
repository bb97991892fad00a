use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{io_error, sha256_file, write_atomic, StoreError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub created_at: DateTime<Utc>,
    pub seed: u64,
    pub config_hash: String,
    pub provider_id: Option<String>,
    /// e.g. `"features" -> FEATURE_SCHEMA_VERSION`.
    pub schema_versions: BTreeMap<String, String>,
    /// Row count per file name at write time.
    pub counts: BTreeMap<String, u64>,
}

fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = std::fs::read(path).map_err(io_error(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(io_error(path))
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        load_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        save_json(path, self)
    }
}

/// Record of one completed pipeline stage, used to skip reruns whose
/// inputs have not changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub input_hash: String,
    pub seed: u64,
    /// Output file name (relative to the dataset dir) -> SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub completed_at: DateTime<Utc>,
}

impl StageRecord {
    pub fn path(dir: &Path, stage: &str) -> PathBuf {
        dir.join("stages").join(format!("{stage}.json"))
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Option<Self>, StoreError> {
        let path = Self::path(dir, stage);
        if !path.exists() {
            return Ok(None);
        }
        load_json(&path).map(Some)
    }

    /// Hashes `outputs` under `dir` and writes the record.
    pub fn complete(dir: &Path, stage: &str, input_hash: &str, seed: u64, outputs: &[&str]) -> Result<Self, StoreError> {
        let mut hashes = BTreeMap::new();
        for name in outputs {
            hashes.insert(name.to_string(), sha256_file(&dir.join(name))?);
        }
        let record = StageRecord {
            stage: stage.into(),
            input_hash: input_hash.into(),
            seed,
            outputs: hashes,
            completed_at: Utc::now(),
        };
        let path = Self::path(dir, stage);
        std::fs::create_dir_all(path.parent().expect("stage path has parent")).map_err(io_error(&path))?;
        save_json(&path, &record)?;
        Ok(record)
    }

    /// True when the record matches `input_hash` and every output is still
    /// present with its recorded hash.
    pub fn is_current(&self, dir: &Path, input_hash: &str) -> bool {
        self.input_hash == input_hash
            && self
                .outputs
                .iter()
                .all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
    }
}
