use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skillvid_core::featurize::FeatureRow;
use skillvid_core::forest::{ForestError, ForestModel};
use skillvid_core::PairId;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Relevant,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub pair_id: PairId,
    pub video_id: String,
    pub proba: f64,
    pub decision: Decision,
    /// Irrelevant videos are dropped from the published dataset.
    pub discarded: bool,
}

pub fn decide(proba: f64, threshold: f64) -> Decision {
    if proba >= threshold {
        Decision::Relevant
    } else {
        Decision::Irrelevant
    }
}

/// Scores every row, keeping input order. Any row whose schema differs
/// from the model's fails the whole batch.
pub fn classify_rows(model: &ForestModel, rows: &[FeatureRow], threshold: f64) -> Result<Vec<DecisionRow>, ForestError> {
    rows.par_iter()
        .map(|row| {
            let proba = model.predict_proba(row)?;
            let decision = decide(proba, threshold);
            Ok(DecisionRow {
                pair_id: row.pair_id.clone(),
                video_id: row.video_id.clone(),
                proba,
                decision,
                discarded: decision == Decision::Irrelevant,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(decide(0.61, 0.6), Decision::Relevant);
        assert_eq!(decide(0.6, 0.6), Decision::Relevant);
        assert_eq!(decide(0.5999, 0.6), Decision::Irrelevant);
    }

    #[test]
    fn decision_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Decision::Relevant).unwrap(), "\"relevant\"");
    }
}
