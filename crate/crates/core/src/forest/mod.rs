//! Random forest binary classifier.
//!
//! Each tree is a CART grown on a bootstrap sample with Gini impurity and
//! `m_try` features sampled per node. Tree `t` draws from an RNG seeded by
//! `mix(seed, t)`, and bootstrap draws index into a canonical ordering of
//! the training rows, so the fitted forest depends only on the row *set*,
//! the parameters, and the seed: not on input order or thread count.

mod cv;
mod io;
mod split;

use chrono::{DateTime, Utc};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cv::{cross_validate, default_grid, stratified_folds, CvOutcome, CvRow};
pub use io::{load_model, save_model, FORMAT_VERSION};
pub use split::{best_split, gini, Split};

use crate::featurize::FeatureRow;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training rows contain no {missing} examples; both classes are required")]
    MissingClass { missing: &'static str },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("impurity of an empty node is undefined")]
    EmptyNode,
    #[error("row {index} has no label")]
    Unlabeled { index: usize },
    #[error("schema mismatch: model expects {expected}, row is {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("expected {expected} features, got {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("cross-validation: {0}")]
    CrossValidation(String),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file malformed: {0}")]
    Malformed(String),
    #[error("model format version {found} is not supported (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("model content hash mismatch: header says {expected}, content hashes to {actual}")]
    HashMismatch { expected: String, actual: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until another stopping rule applies.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per split; `None` means `floor(sqrt(dim))`.
    pub m_try: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            m_try: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    /// Fills in `m_try` for `dim` features and checks the invariants.
    pub fn resolve(&self, dim: usize) -> Result<ForestParams, ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::InvalidParams("min_leaf must be >= 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::InvalidParams("max_depth must be >= 1".into()));
        }
        if dim == 0 {
            return Err(ForestError::InvalidParams("no features".into()));
        }
        let m_try = self.m_try.unwrap_or_else(|| ((dim as f64).sqrt().floor() as usize).max(1));
        if !(1..=dim).contains(&m_try) {
            return Err(ForestError::InvalidParams(format!(
                "m_try must be in [1, {dim}], got {m_try}"
            )));
        }
        Ok(ForestParams {
            m_try: Some(m_try),
            ..self.clone()
        })
    }
}

/// splitmix64 finalizer over `seed ^ t * golden`.
pub fn tree_seed(seed: u64, tree: u64) -> u64 {
    let mut z = seed ^ tree.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Values `<= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf { pos: u32, neg: u32 },
}

/// Nodes stored in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(pos: u32, neg: u32) -> Tree {
        Tree {
            nodes: vec![TreeNode::Leaf { pos, neg }],
        }
    }

    /// Positive fraction of the leaf `values` routes to.
    pub fn leaf_fraction(&self, values: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if values[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                TreeNode::Leaf { pos, neg } => return pos as f64 / (pos + neg) as f64,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + go(t, left as usize).max(go(t, right as usize))
                }
            }
        }
        go(self, 0)
    }

    /// Structural checks for trees read from disk: child indices point
    /// forward and in range, features are in range, leaves are non-empty.
    pub fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, r) = (left as usize, right as usize);
                    if l <= i || r <= i || l >= self.nodes.len() || r >= self.nodes.len() {
                        return Err(format!("node {i} has invalid children ({l}, {r})"));
                    }
                    if feature as usize >= n_features {
                        return Err(format!("node {i} splits on feature {feature} >= {n_features}"));
                    }
                    if threshold.is_nan() {
                        return Err(format!("node {i} has NaN threshold"));
                    }
                }
                TreeNode::Leaf { pos, neg } => {
                    if pos + neg == 0 {
                        return Err(format!("leaf {i} is empty"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Labeled design matrix with a stable key per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub schema_id: String,
    pub n_features: usize,
    pub keys: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl TrainingSet {
    pub fn new(schema_id: impl Into<String>, n_features: usize) -> Self {
        TrainingSet {
            schema_id: schema_id.into(),
            n_features,
            keys: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, key: impl Into<String>, values: Vec<f64>, positive: bool) -> Result<(), ForestError> {
        if values.len() != self.n_features {
            return Err(ForestError::FeatureCount {
                expected: self.n_features,
                got: values.len(),
            });
        }
        self.keys.push(key.into());
        self.x.push(values);
        self.y.push(positive);
        Ok(())
    }

    /// Requires every row labeled and all rows on one schema.
    pub fn from_rows(rows: &[FeatureRow]) -> Result<Self, ForestError> {
        let first = rows.first().ok_or(ForestError::EmptyTrainingSet)?;
        let mut set = TrainingSet::new(first.schema_id.as_str(), first.schema_id.dim());
        for (index, row) in rows.iter().enumerate() {
            if row.schema_id != first.schema_id {
                return Err(ForestError::SchemaMismatch {
                    expected: first.schema_id.to_string(),
                    got: row.schema_id.to_string(),
                });
            }
            let label = row.label.ok_or(ForestError::Unlabeled { index })?;
            set.push(
                format!("{}\u{0}{}", row.pair_id, row.video_id),
                row.values.clone(),
                label.is_positive(),
            )?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&p| p).count()
    }

    pub fn subset(&self, idx: &[usize]) -> TrainingSet {
        TrainingSet {
            schema_id: self.schema_id.clone(),
            n_features: self.n_features,
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Row indices sorted by (key, feature bits, label).
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.keys[a]
                .cmp(&self.keys[b])
                .then_with(|| {
                    let bits = |i: usize| self.x[i].iter().map(|v| v.to_bits());
                    bits(a).cmp(bits(b))
                })
                .then_with(|| self.y[a].cmp(&self.y[b]))
        });
        order
    }

    fn check_trainable(&self) -> Result<(), ForestError> {
        if self.is_empty() {
            return Err(ForestError::EmptyTrainingSet);
        }
        let pos = self.n_positive();
        if pos == 0 {
            return Err(ForestError::MissingClass { missing: "positive" });
        }
        if pos == self.len() {
            return Err(ForestError::MissingClass { missing: "negative" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    /// Resolved parameters (`m_try` filled in).
    pub params: ForestParams,
    pub schema_id: String,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    pub trained_at: DateTime<Utc>,
    /// Hex SHA-256 over the canonical encoding of schema, params and trees.
    pub content_hash: String,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModelBody {
    pub schema_id: String,
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ForestModel {
    /// Assembles a model from already-built trees.
    pub fn from_trees(
        params: ForestParams,
        schema_id: impl Into<String>,
        n_features: usize,
        trees: Vec<Tree>,
    ) -> Result<Self, ForestError> {
        let params = params.resolve(n_features)?;
        if trees.len() != params.n_trees {
            return Err(ForestError::InvalidParams(format!(
                "n_trees is {} but {} trees were given",
                params.n_trees,
                trees.len()
            )));
        }
        for t in &trees {
            t.validate(n_features).map_err(ForestError::Malformed)?;
        }
        let mut model = ForestModel {
            params,
            schema_id: schema_id.into(),
            n_features,
            trees,
            trained_at: Utc::now(),
            content_hash: String::new(),
        };
        model.content_hash = hash_bytes(&model.body_bytes());
        Ok(model)
    }

    pub(crate) fn body_bytes(&self) -> Vec<u8> {
        let body = ModelBody {
            schema_id: self.schema_id.clone(),
            n_features: self.n_features,
            params: self.params.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_vec(&body).expect("model body serializes")
    }

    /// Mean positive leaf fraction across trees.
    pub fn predict_values(&self, values: &[f64]) -> Result<f64, ForestError> {
        if values.len() != self.n_features {
            return Err(ForestError::FeatureCount {
                expected: self.n_features,
                got: values.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_fraction(values)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn predict_proba(&self, row: &FeatureRow) -> Result<f64, ForestError> {
        if row.schema_id.as_str() != self.schema_id {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema_id.clone(),
                got: row.schema_id.to_string(),
            });
        }
        self.predict_values(&row.values)
    }

    pub fn predict_set(&self, set: &TrainingSet) -> Result<Vec<f64>, ForestError> {
        if set.schema_id != self.schema_id {
            return Err(ForestError::SchemaMismatch {
                expected: self.schema_id.clone(),
                got: set.schema_id.clone(),
            });
        }
        set.x.par_iter().map(|v| self.predict_values(v)).collect()
    }
}

pub fn predict_proba(model: &ForestModel, row: &FeatureRow) -> Result<f64, ForestError> {
    model.predict_proba(row)
}

pub fn train_forest(set: &TrainingSet, params: &ForestParams) -> Result<ForestModel, ForestError> {
    set.check_trainable()?;
    let params = params.resolve(set.n_features)?;
    let order = set.canonical_order();
    let x: Vec<&[f64]> = order.iter().map(|&i| set.x[i].as_slice()).collect();
    let y: Vec<bool> = order.iter().map(|&i| set.y[i]).collect();

    let trees: Vec<Tree> = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| grow_tree(&x, &y, &params, set.n_features, tree_seed(params.seed, t)))
        .collect();

    ForestModel::from_trees(params, set.schema_id.clone(), set.n_features, trees)
}

fn grow_tree(x: &[&[f64]], y: &[bool], params: &ForestParams, dim: usize, seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let m_try = params.m_try.expect("resolved params");
    let max_depth = params.max_depth.unwrap_or(usize::MAX);

    let mut nodes = vec![TreeNode::Leaf { pos: 0, neg: 0 }];
    // (node, start, end, depth) over idx
    let mut stack = vec![(0usize, 0usize, n, 0usize)];
    let mut buf = Vec::with_capacity(n);
    let mut scratch = Vec::with_capacity(n);

    while let Some((node, start, end, depth)) = stack.pop() {
        let rows = &mut idx[start..end];
        let pos = rows.iter().filter(|&&i| y[i]).count();
        let neg = rows.len() - pos;
        let leaf = TreeNode::Leaf {
            pos: pos as u32,
            neg: neg as u32,
        };
        if depth >= max_depth || rows.len() < 2 * params.min_leaf || pos == 0 || neg == 0 {
            nodes[node] = leaf;
            continue;
        }
        let mut features = index::sample(&mut rng, dim, m_try).into_vec();
        features.sort_unstable();
        let Some(split) = split::find_split(x, y, rows, &features, params.min_leaf, &mut buf) else {
            nodes[node] = leaf;
            continue;
        };

        // stable partition: left rows first
        scratch.clear();
        scratch.extend(rows.iter().copied().filter(|&i| x[i][split.feature] <= split.threshold));
        let n_left = scratch.len();
        scratch.extend(rows.iter().copied().filter(|&i| x[i][split.feature] > split.threshold));
        rows.copy_from_slice(&scratch);

        let left = nodes.len();
        nodes.push(TreeNode::Leaf { pos: 0, neg: 0 });
        nodes.push(TreeNode::Leaf { pos: 0, neg: 0 });
        nodes[node] = TreeNode::Split {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left as u32,
            right: (left + 1) as u32,
        };
        stack.push((left + 1, start + n_left, end, depth + 1));
        stack.push((left, start, start + n_left, depth + 1));
    }
    Tree { nodes }
}
