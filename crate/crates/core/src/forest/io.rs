//! Versioned model file: one JSON header line, then the JSON body.
//!
//! The header carries the SHA-256 of the body bytes, so a truncated or
//! edited file fails with a hash mismatch rather than a parse error.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{hash_bytes, ForestError, ForestModel, ModelBody};

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "skillvid-forest";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    format_version: u32,
    schema_id: String,
    n_features: usize,
    n_trees: usize,
    trained_at: DateTime<Utc>,
    content_hash: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ForestError + '_ {
    move |source| ForestError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<(), ForestError> {
    let body = model.body_bytes();
    let header = Header {
        format: FORMAT_NAME.into(),
        format_version: FORMAT_VERSION,
        schema_id: model.schema_id.clone(),
        n_features: model.n_features,
        n_trees: model.trees.len(),
        trained_at: model.trained_at,
        content_hash: hash_bytes(&body),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(&body);
    crate::store::write_atomic(path, &bytes).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ForestModel, ForestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ForestError::Malformed("missing header line".into()))?;
    let (head, body) = (&bytes[..newline], &bytes[newline + 1..]);

    // Version first, so a future format gets a clear error.
    let raw: serde_json::Value =
        serde_json::from_slice(head).map_err(|e| ForestError::Malformed(format!("header: {e}")))?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
        return Err(ForestError::Malformed("not a skillvid forest file".into()));
    }
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ForestError::Malformed("header lacks format_version".into()))? as u32;
    if found != FORMAT_VERSION {
        return Err(ForestError::Version {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| ForestError::Malformed(format!("header: {e}")))?;

    let actual = hash_bytes(body);
    if actual != header.content_hash {
        return Err(ForestError::HashMismatch {
            expected: header.content_hash,
            actual,
        });
    }
    let body: ModelBody =
        serde_json::from_slice(body).map_err(|e| ForestError::Malformed(format!("body: {e}")))?;
    if body.schema_id != header.schema_id || body.n_features != header.n_features {
        return Err(ForestError::Malformed("header and body disagree on schema".into()));
    }
    let model = ForestModel::from_trees(body.params, body.schema_id, body.n_features, body.trees)?;
    Ok(ForestModel {
        trained_at: header.trained_at,
        ..model
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{train_forest, ForestParams, TrainingSet};

    fn model() -> ForestModel {
        let mut set = TrainingSet::new("toy", 1);
        for i in 0..20 {
            set.push(format!("{i:02}"), vec![i as f64], i >= 10).unwrap();
        }
        train_forest(&set, &ForestParams { n_trees: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let m = model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_is_a_hash_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&model(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_model(&path), Err(ForestError::HashMismatch { .. })));
    }

    #[test]
    fn version_checked_before_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&model(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let text = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        fs::write(&path, &text[..text.len() - 3]).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ForestError::Version { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn garbage_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        fs::write(&path, "hello").unwrap();
        assert!(matches!(load_model(&path), Err(ForestError::Malformed(_))));
    }
}
