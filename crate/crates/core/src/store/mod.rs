//! File-backed persistence: line-delimited JSON datasets, the pairs CSV,
//! the append-only label log, and dataset manifests.

mod export;
mod labels;
mod manifest;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use export::{export_training_set, join_labels, Export, Reconciliation};
pub use labels::{append_labels, effective_labels, read_labels, EffectiveLabels};
pub use manifest::{DatasetManifest, StageRecord, MANIFEST_FILE};

use crate::types::TitleSkillPair;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: rows mix feature schemas {first} and {other}")]
    MixedSchemas {
        path: PathBuf,
        first: String,
        other: String,
    },
    #[error("{path}: feature schema version {found:?} does not match this build ({expected:?})")]
    SchemaVersion {
        path: PathBuf,
        found: String,
        expected: String,
    },
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = tmp_path(path);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    path.with_file_name(name)
}

pub fn sha256_file(path: &Path) -> Result<String, StoreError> {
    let mut f = File::open(path).map_err(io_error(path))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).map_err(io_error(path))?;
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// First malformed line aborts the read.
    #[default]
    Strict,
    /// Malformed lines are skipped and counted.
    Lenient,
}

/// Streaming reader over a JSONL file. Blank lines are ignored.
pub struct JsonlReader<T> {
    path: PathBuf,
    lines: io::Lines<BufReader<File>>,
    line_no: usize,
    mode: ParseMode,
    skipped: Vec<usize>,
    _row: PhantomData<T>,
}

impl<T: DeserializeOwned> JsonlReader<T> {
    pub fn open(path: &Path, mode: ParseMode) -> Result<Self, StoreError> {
        let f = File::open(path).map_err(io_error(path))?;
        Ok(JsonlReader {
            path: path.to_path_buf(),
            lines: BufReader::new(f).lines(),
            line_no: 0,
            mode,
            skipped: Vec::new(),
            _row: PhantomData,
        })
    }

    /// Line numbers (1-based) skipped so far in lenient mode.
    pub fn skipped(&self) -> &[usize] {
        &self.skipped
    }
}

impl<T: DeserializeOwned> Iterator for JsonlReader<T> {
    type Item = Result<T, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(StoreError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(row) => return Some(Ok(row)),
                Err(e) if self.mode == ParseMode::Lenient => {
                    log::warn!("{}:{}: skipping malformed line: {e}", self.path.display(), self.line_no);
                    self.skipped.push(self.line_no);
                }
                Err(e) => {
                    return Some(Err(StoreError::Parse {
                        path: self.path.clone(),
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome<T> {
    pub rows: Vec<T>,
    /// 1-based line numbers skipped in lenient mode.
    pub skipped: Vec<usize>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, mode: ParseMode) -> Result<ReadOutcome<T>, StoreError> {
    let mut reader = JsonlReader::open(path, mode)?;
    let rows = reader.by_ref().collect::<Result<Vec<T>, _>>()?;
    Ok(ReadOutcome {
        rows,
        skipped: reader.skipped,
    })
}

/// Writes one JSON object per line, atomically replacing `path`.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<usize, StoreError> {
    let tmp = tmp_path(path);
    let write = || -> io::Result<usize> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let mut n = 0;
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
            n += 1;
        }
        let f = w.into_inner().map_err(|e| e.into_error())?;
        f.sync_data()?;
        fs::rename(&tmp, path)?;
        Ok(n)
    };
    write().map_err(|source| {
        let _ = fs::remove_file(&tmp);
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

#[derive(serde::Deserialize)]
struct PairCsvRow {
    job_title: String,
    skill: String,
}

/// Reads `job_title,skill` rows. Duplicate pairs (same pair_id) keep the
/// first occurrence.
pub fn read_pairs_csv(path: &Path) -> Result<Vec<TitleSkillPair>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| StoreError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| StoreError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["job_title", "skill"] {
        return Err(StoreError::Csv {
            path: path.to_path_buf(),
            message: format!("expected header job_title,skill, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut seen = std::collections::HashSet::new();
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<PairCsvRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        let pair = TitleSkillPair::new(&row.job_title, &row.skill).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if seen.insert(pair.pair_id.clone()) {
            pairs.push(pair);
        } else {
            log::warn!("{}:{line}: duplicate pair {} ignored", path.display(), pair.pair_id);
        }
    }
    Ok(pairs)
}

pub fn write_pairs_csv(path: &Path, pairs: &[TitleSkillPair]) -> Result<(), StoreError> {
    let csv_err = |e: csv::Error| StoreError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["job_title", "skill"]).map_err(csv_err)?;
    for p in pairs {
        w.write_record([&p.job_title, &p.skill]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| StoreError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes).map_err(io_error(path))
}
