//! Stratified k-fold cross-validation over a hyper-parameter grid.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{train_forest, tree_seed, ForestError, ForestParams, TrainingSet};
use crate::eval::confusion_at;

/// Threshold at which fold predictions are scored.
pub const CV_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub params: ForestParams,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fold_precision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub k: usize,
    pub seed: u64,
    pub rows: Vec<CvRow>,
    pub selected: ForestParams,
}

/// `n_trees` x `max_depth` x `min_leaf` grid used when no grid is configured.
pub fn default_grid(seed: u64) -> Vec<ForestParams> {
    let mut grid = Vec::new();
    for n_trees in [100, 300] {
        for max_depth in [Some(8), Some(16), None] {
            for min_leaf in [1, 5] {
                grid.push(ForestParams {
                    n_trees,
                    max_depth,
                    min_leaf,
                    m_try: None,
                    seed,
                });
            }
        }
    }
    grid
}

/// Fold index for each row of `set`. Each class is shuffled separately
/// (in canonical row order) and dealt round-robin, so every fold holds at
/// least one row of each class.
pub fn stratified_folds(set: &TrainingSet, k: usize, seed: u64) -> Result<Vec<usize>, ForestError> {
    if k < 2 {
        return Err(ForestError::CrossValidation(format!("k must be >= 2, got {k}")));
    }
    let pos = set.n_positive();
    let neg = set.len() - pos;
    if pos < k || neg < k {
        return Err(ForestError::CrossValidation(format!(
            "{k} folds need at least {k} rows of each class; have {pos} positive, {neg} negative"
        )));
    }
    let order = set.canonical_order();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, u64::MAX));
    let mut folds = vec![0usize; set.len()];
    // The deal continues across classes so fold sizes differ by at most one.
    let mut next = 0usize;
    for class in [true, false] {
        let mut members: Vec<usize> = order.iter().copied().filter(|&i| set.y[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs k-fold CV for every grid entry and selects the entry with the
/// highest mean precision, then F1, then fewer trees, then shallower depth,
/// then earlier grid position.
pub fn cross_validate(
    set: &TrainingSet,
    grid: &[ForestParams],
    k: usize,
    seed: u64,
) -> Result<CvOutcome, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::CrossValidation("hyper-parameter grid is empty".into()));
    }
    let folds = stratified_folds(set, k, seed)?;
    let splits: Vec<(TrainingSet, TrainingSet)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..set.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..set.len()).filter(|&i| folds[i] == f).collect();
            (set.subset(&train), set.subset(&test))
        })
        .collect();

    let mut rows = Vec::with_capacity(grid.len());
    for params in grid {
        let (mut p, mut r, mut f1) = (Vec::new(), Vec::new(), Vec::new());
        for (train, test) in &splits {
            let model = train_forest(train, params)?;
            let proba = model.predict_set(test)?;
            let c = confusion_at(&proba, &test.y, CV_THRESHOLD)
                .map_err(|e| ForestError::CrossValidation(e.to_string()))?;
            p.push(c.precision());
            r.push(c.recall());
            f1.push(c.f1());
        }
        log::info!(
            "cv {:?}: precision {:.4} recall {:.4} f1 {:.4}",
            params,
            mean(&p),
            mean(&r),
            mean(&f1)
        );
        rows.push(CvRow {
            params: params.clone(),
            precision: mean(&p),
            recall: mean(&r),
            f1: mean(&f1),
            fold_precision: p,
        });
    }

    let selected = select(&rows).params.clone();
    Ok(CvOutcome { k, seed, rows, selected })
}

fn select(rows: &[CvRow]) -> &CvRow {
    let depth_key = |d: Option<usize>| d.unwrap_or(usize::MAX);
    let mut best = &rows[0];
    for row in &rows[1..] {
        let better = row
            .precision
            .total_cmp(&best.precision)
            .then(row.f1.total_cmp(&best.f1))
            .then(best.params.n_trees.cmp(&row.params.n_trees))
            .then(depth_key(best.params.max_depth).cmp(&depth_key(row.params.max_depth)))
            .is_gt();
        if better {
            best = row;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> TrainingSet {
        let mut set = TrainingSet::new("toy", 2);
        for i in 0..n {
            let v = i as f64 / n as f64;
            set.push(format!("{i:04}"), vec![v, (i % 7) as f64], v > 0.6).unwrap();
        }
        set
    }

    fn row(n_trees: usize, max_depth: Option<usize>, precision: f64, f1: f64) -> CvRow {
        CvRow {
            params: ForestParams { n_trees, max_depth, ..Default::default() },
            precision,
            recall: 0.0,
            f1,
            fold_precision: vec![],
        }
    }

    #[test]
    fn folds_are_stratified() {
        let set = toy(50);
        let folds = stratified_folds(&set, 5, 3).unwrap();
        for f in 0..5 {
            let pos = (0..50).filter(|&i| folds[i] == f && set.y[i]).count();
            let all = folds.iter().filter(|&&g| g == f).count();
            assert_eq!(all, 10);
            assert!((3..=4).contains(&pos), "fold {f} has {pos} positives");
        }
    }

    #[test]
    fn folds_ignore_input_order() {
        let set = toy(40);
        let rev = set.subset(&(0..40).rev().collect::<Vec<_>>());
        let a = stratified_folds(&set, 4, 9).unwrap();
        let b = stratified_folds(&rev, 4, 9).unwrap();
        for i in 0..40 {
            assert_eq!(a[i], b[39 - i]);
        }
    }

    #[test]
    fn too_few_per_class_is_an_error() {
        let mut set = TrainingSet::new("t", 1);
        for i in 0..10 {
            set.push(format!("{i}"), vec![i as f64], i < 2).unwrap();
        }
        assert!(matches!(stratified_folds(&set, 5, 0), Err(ForestError::CrossValidation(_))));
    }

    #[test]
    fn selection_tie_breaks() {
        let rows = vec![row(300, Some(8), 0.9, 0.5), row(100, Some(16), 0.9, 0.5)];
        assert_eq!(select(&rows).params.n_trees, 100);
        let rows = vec![row(100, None, 0.9, 0.5), row(100, Some(16), 0.9, 0.5)];
        assert_eq!(select(&rows).params.max_depth, Some(16));
        let rows = vec![row(100, Some(8), 0.8, 0.9), row(300, None, 0.9, 0.1)];
        assert_eq!(select(&rows).params.n_trees, 300);
        let rows = vec![row(100, Some(8), 0.9, 0.4), row(100, Some(8), 0.9, 0.6)];
        assert_eq!(select(&rows).f1, 0.6);
        let rows = vec![row(100, Some(8), 0.9, 0.6), row(100, Some(8), 0.9, 0.6)];
        assert!(std::ptr::eq(select(&rows), &rows[0]));
    }

    #[test]
    fn cross_validate_scores_every_config() {
        let set = toy(60);
        let grid = vec![
            ForestParams { n_trees: 5, max_depth: Some(2), ..Default::default() },
            ForestParams { n_trees: 5, max_depth: None, ..Default::default() },
        ];
        let out = cross_validate(&set, &grid, 3, 1).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.fold_precision.len() == 3));
        assert!(grid.contains(&out.selected));
        assert!(cross_validate(&set, &[], 3, 1).is_err());
    }

    #[test]
    fn default_grid_has_twelve_entries() {
        assert_eq!(default_grid(0).len(), 12);
    }
}
