//! Train/test split, confusion metrics, utility precision and the
//! threshold sweep.

mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{emit_report, render_svg, sweep_csv};

use crate::featurize::FeatureRow;
use crate::forest::{ForestError, ForestModel};

/// Operating-point FPR target reported alongside the sweep.
pub const DEFAULT_FPR_TARGET: f64 = 0.07;
pub const MIN_SPLIT_ROWS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{probas} probabilities but {labels} labels")]
    LengthMismatch { probas: usize, labels: usize },
    #[error("probability at index {index} is {value}, outside [0, 1]")]
    ProbaOutOfRange { index: usize, value: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error("need at least {min} labeled rows to split, got {got}")]
    TooFewRows { got: usize, min: usize },
    #[error("all labeled rows are {0}; both classes are required")]
    SingleClass(&'static str),
    #[error("row {index} has no label")]
    Unlabeled { index: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("thresholds must be strictly increasing")]
    Thresholds,
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf(c: &Confusion) -> Prf {
    Prf {
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
    }
}

pub fn fpr(c: &Confusion) -> f64 {
    c.fpr()
}

fn check_probas(probas: &[f64]) -> Result<(), EvalError> {
    match probas.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(index) => Err(EvalError::ProbaOutOfRange {
            index,
            value: probas[index],
        }),
        None => Ok(()),
    }
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(EvalError::Threshold(t))
    }
}

/// Predicted positive iff `proba >= threshold`.
pub fn confusion_at(probas: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion, EvalError> {
    if probas.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probas: probas.len(),
            labels: labels.len(),
        });
    }
    check_probas(probas)?;
    check_threshold(threshold)?;
    Ok(confusion_unchecked(probas.iter().copied().zip(labels.iter().copied()), threshold))
}

fn confusion_unchecked(rows: impl Iterator<Item = (f64, bool)>, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (p, positive) in rows {
        match (p >= threshold, positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// A test row reduced to what the metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub pair_id: String,
    pub proba: f64,
    pub positive: bool,
}

/// Share of pairs with at least one relevant video for which at least one
/// of those relevant videos scores `>= threshold`.
pub fn utility_precision(rows: &[ScoredRow], threshold: f64) -> f64 {
    // pair -> (has a positive row, a positive row clears the threshold)
    let mut pairs: BTreeMap<&str, bool> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.positive) {
        let hit = pairs.entry(r.pair_id.as_str()).or_insert(false);
        *hit |= r.proba >= threshold;
    }
    let predicted = pairs.values().filter(|&&h| h).count() as u64;
    ratio(predicted, pairs.len() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub utility_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub at_half: Prf,
    pub sweep: Vec<SweepRow>,
    pub n_test_rows: usize,
    pub n_test_pairs: usize,
    pub fpr_target: f64,
    /// Smallest swept threshold with FPR at or below `fpr_target`.
    pub threshold_at_fpr_target: Option<f64>,
}

/// `0.00, 0.05, ..., 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

pub fn sweep_scored(rows: &[ScoredRow], thresholds: &[f64], fpr_target: f64) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Thresholds);
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let probas: Vec<f64> = rows.iter().map(|r| r.proba).collect();
    check_probas(&probas)?;

    let confusion = |t: f64| confusion_unchecked(rows.iter().map(|r| (r.proba, r.positive)), t);
    let sweep: Vec<SweepRow> = thresholds
        .par_iter()
        .map(|&t| {
            let c = confusion(t);
            SweepRow {
                threshold: t,
                confusion: c,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                fpr: c.fpr(),
                utility_precision: utility_precision(rows, t),
            }
        })
        .collect();

    let threshold_at_fpr_target = sweep.iter().find(|r| r.fpr <= fpr_target).map(|r| r.threshold);
    let n_test_pairs = rows
        .iter()
        .map(|r| r.pair_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(EvalReport {
        at_half: prf(&confusion(0.5)),
        sweep,
        n_test_rows: rows.len(),
        n_test_pairs,
        fpr_target,
        threshold_at_fpr_target,
    })
}

/// Scores `test` once with `model` and sweeps the thresholds.
pub fn sweep(
    model: &ForestModel,
    test: &[FeatureRow],
    thresholds: &[f64],
    fpr_target: f64,
) -> Result<EvalReport, EvalError> {
    let rows = score_rows(model, test)?;
    sweep_scored(&rows, thresholds, fpr_target)
}

pub fn score_rows(model: &ForestModel, rows: &[FeatureRow]) -> Result<Vec<ScoredRow>, EvalError> {
    rows.par_iter()
        .enumerate()
        .map(|(index, row)| {
            let label = row.label.ok_or(EvalError::Unlabeled { index })?;
            Ok(ScoredRow {
                pair_id: row.pair_id.to_string(),
                proba: model.predict_proba(row)?,
                positive: label.is_positive(),
            })
        })
        .collect()
}

/// Index-level stratified split. Rows sharing a key move together; each key
/// group takes the label of its first row. Groups are put in key order, then
/// each class is shuffled with `seed` and the first
/// `round(ratio * class_size)` groups of each class go to train.
pub fn split_indices(
    keys: &[String],
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if keys.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            probas: keys.len(),
            labels: labels.len(),
        });
    }
    if keys.len() < MIN_SPLIT_ROWS {
        return Err(EvalError::TooFewRows {
            got: keys.len(),
            min: MIN_SPLIT_ROWS,
        });
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(EvalError::Threshold(ratio));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k.as_str()).or_default().push(i);
    }
    let (mut pos, mut neg): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        groups.into_values().partition(|g| labels[g[0]]);
    if pos.is_empty() {
        return Err(EvalError::SingleClass("negative"));
    }
    if neg.is_empty() {
        return Err(EvalError::SingleClass("positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [&mut pos, &mut neg] {
        class.shuffle(&mut rng);
        let n_train = (ratio * class.len() as f64).round() as usize;
        for (j, g) in class.iter().enumerate() {
            if j < n_train {
                train.extend_from_slice(g);
            } else {
                test.extend_from_slice(g);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits labeled feature rows, keeping each (pair_id, video_id) on one side.
pub fn split_train_test(
    rows: &[FeatureRow],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<FeatureRow>, Vec<FeatureRow>), EvalError> {
    let mut labels = Vec::with_capacity(rows.len());
    for (index, r) in rows.iter().enumerate() {
        labels.push(r.label.ok_or(EvalError::Unlabeled { index })?.is_positive());
    }
    let keys: Vec<String> = rows.iter().map(|r| format!("{}\u{0}{}", r.pair_id, r.video_id)).collect();
    let (train, test) = split_indices(&keys, &labels, ratio, seed)?;
    Ok((
        train.into_iter().map(|i| rows[i].clone()).collect(),
        test.into_iter().map(|i| rows[i].clone()).collect(),
    ))
}
