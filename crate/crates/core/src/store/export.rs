use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{effective_labels, read_labels, DatasetManifest, JsonlReader, ParseMode, StoreError, MANIFEST_FILE};
use crate::featurize::{FeatureRow, FEATURE_SCHEMA_VERSION};
use crate::types::LabelRecord;

/// Rows that did not make it into the join.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconciliation {
    /// Feature rows without an effective label.
    pub unlabeled: usize,
    /// Effective labels without a feature row.
    pub orphan_labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub rows: Vec<FeatureRow>,
    pub reconciliation: Reconciliation,
}

/// Inner join of feature rows with the effective labels, in feature order.
pub fn join_labels(features: impl IntoIterator<Item = FeatureRow>, log: &[LabelRecord]) -> Export {
    let labels = effective_labels(log);
    let mut matched = BTreeSet::new();
    let mut rows = Vec::new();
    let mut unlabeled = 0;
    for mut row in features {
        match labels.get(&row.key()) {
            Some(l) => {
                matched.insert(row.key());
                row.label = Some(l.label);
                rows.push(row);
            }
            None => unlabeled += 1,
        }
    }
    Export {
        rows,
        reconciliation: Reconciliation {
            unlabeled,
            orphan_labels: labels.len() - matched.len(),
        },
    }
}

/// Reads `features_path` and `labels_path` and joins them. Fails if the
/// feature rows mix schemas or the dataset manifest next to the features
/// records a different feature schema version. `mode` applies to both files.
pub fn export_training_set(labels_path: &Path, features_path: &Path, mode: ParseMode) -> Result<Export, StoreError> {
    if let Some(dir) = features_path.parent() {
        let manifest = dir.join(MANIFEST_FILE);
        if manifest.exists() {
            let m = DatasetManifest::load(&manifest)?;
            if let Some(found) = m.schema_versions.get("features") {
                if found != FEATURE_SCHEMA_VERSION {
                    return Err(StoreError::SchemaVersion {
                        path: manifest,
                        found: found.clone(),
                        expected: FEATURE_SCHEMA_VERSION.into(),
                    });
                }
            }
        }
    }
    let log = read_labels(labels_path, mode)?.rows;
    let mut first = None;
    let mut features = Vec::new();
    for row in JsonlReader::<FeatureRow>::open(features_path, mode)? {
        let row = row?;
        match first {
            None => first = Some(row.schema_id),
            Some(s) if s != row.schema_id => {
                return Err(StoreError::MixedSchemas {
                    path: features_path.to_path_buf(),
                    first: s.to_string(),
                    other: row.schema_id.to_string(),
                })
            }
            _ => {}
        }
        features.push(row);
    }
    Ok(join_labels(features, &log))
}
