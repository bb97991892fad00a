//! Run configuration: a TOML file whose values command-line flags may
//! override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skillvid_core::featurize::SchemaId;
use skillvid_core::forest::{default_grid, ForestParams};
use skillvid_core::harvest::DEFAULT_CAP;
use skillvid_core::source::{SourceConfig, SourceKind};
use skillvid_core::store::ParseMode;

use crate::{PipelineError, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Input CSV with header `job_title,skill`.
    pub pairs: PathBuf,
    /// Append-only label log.
    pub labels: PathBuf,
    /// Where every stage writes its outputs.
    pub out_dir: PathBuf,
    pub schema: SchemaId,
    pub lenient: bool,
    pub source: SourceSection,
    pub harvest: HarvestSection,
    pub embed: EmbedSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub classify: ClassifySection,
    pub serve: ServeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            pairs: "pairs.csv".into(),
            labels: "labels.jsonl".into(),
            out_dir: "run".into(),
            schema: SchemaId::Set2,
            lenient: false,
            source: SourceSection::default(),
            harvest: HarvestSection::default(),
            embed: EmbedSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            classify: ClassifySection::default(),
            serve: ServeSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    #[serde(flatten)]
    pub config: SourceConfig,
    /// Directory of recorded query files for the fixture source.
    pub fixture_dir: PathBuf,
}

impl Default for SourceSection {
    fn default() -> Self {
        SourceSection {
            config: SourceConfig::default(),
            fixture_dir: "fixtures/search".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestSection {
    pub cap: usize,
    pub concurrency: usize,
}

impl Default for HarvestSection {
    fn default() -> Self {
        HarvestSection {
            cap: DEFAULT_CAP,
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedProvider {
    Hashed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub provider: EmbedProvider,
    /// Environment variable holding the remote server's base URL.
    pub endpoint_env: String,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            provider: EmbedProvider::Hashed,
            endpoint_env: "EMBED_ENDPOINT".into(),
        }
    }
}

/// One hyper-parameter combination; the run seed fills in the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub n_trees: usize,
    /// Omitted means unlimited.
    pub max_depth: Option<usize>,
    #[serde(default = "one")]
    pub min_leaf: usize,
    pub m_try: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub folds: usize,
    pub split_ratio: f64,
    /// Empty means the built-in grid.
    pub grid: Vec<GridEntry>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            folds: 5,
            split_ratio: 0.8,
            grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Empty means 0.00, 0.05, ..., 1.00.
    pub thresholds: Vec<f64>,
    pub fpr_target: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            thresholds: Vec::new(),
            fpr_target: skillvid_core::eval::DEFAULT_FPR_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub threshold: f64,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection { threshold: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            host: "127.0.0.1".into(),
            port: skillvid_label_api::DEFAULT_PORT,
            static_dir: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl RunConfig {
    /// Parses `path`; relative paths inside the file resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.pairs);
        fix(&mut self.labels);
        fix(&mut self.out_dir);
        fix(&mut self.source.fixture_dir);
        if let Some(d) = self.serve.static_dir.as_mut() {
            fix(d);
        }
    }

    pub fn parse_mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    pub fn grid(&self) -> Vec<ForestParams> {
        if self.train.grid.is_empty() {
            return default_grid(self.seed);
        }
        self.train
            .grid
            .iter()
            .map(|g| ForestParams {
                n_trees: g.n_trees,
                max_depth: g.max_depth,
                min_leaf: g.min_leaf,
                m_try: g.m_try,
                seed: self.seed,
            })
            .collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        if self.eval.thresholds.is_empty() {
            skillvid_core::eval::default_thresholds()
        } else {
            self.eval.thresholds.clone()
        }
    }

    /// Checks values, so bad settings surface before any stage starts.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.source.config.validate().map_err(|e| config_err(e.to_string()))?;
        if self.harvest.cap == 0 || self.harvest.concurrency == 0 {
            return Err(config_err("harvest.cap and harvest.concurrency must be >= 1"));
        }
        if self.train.folds < 2 {
            return Err(config_err("train.folds must be >= 2"));
        }
        if !(self.train.split_ratio > 0.0 && self.train.split_ratio < 1.0) {
            return Err(config_err("train.split_ratio must be in (0, 1)"));
        }
        for p in self.grid() {
            p.resolve(self.schema.dim()).map_err(|e| config_err(e.to_string()))?;
        }
        let t = self.thresholds();
        if t.iter().any(|x| !(0.0..=1.0).contains(x)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("eval.thresholds must be strictly increasing values in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.classify.threshold) {
            return Err(config_err("classify.threshold must be in [0, 1]"));
        }
        Ok(())
    }

    /// Fails when a stage in `stages` needs an environment variable that is
    /// unset, before anything touches the network.
    pub fn check_environment(&self, stages: &[Stage]) -> Result<(), PipelineError> {
        let set = |var: &str| std::env::var(var).is_ok_and(|v| !v.trim().is_empty());
        if stages.contains(&Stage::Harvest) && self.source.config.kind == SourceKind::Remote {
            let var = &self.source.config.api_key_env;
            if !set(var) {
                return Err(config_err(format!("remote source selected but {var} is not set")));
            }
        }
        if stages.contains(&Stage::Featurize)
            && self.embed.provider == EmbedProvider::Remote
            && self.schema == SchemaId::Set2
        {
            let var = &self.embed.endpoint_env;
            if !set(var) {
                return Err(config_err(format!("remote embedder selected but {var} is not set")));
            }
        }
        Ok(())
    }

    /// SHA-256 over every setting that can change an artifact. Locations
    /// (input and output paths, the server section) are excluded, so the
    /// same settings pointed at copies of the same inputs hash equally.
    pub fn config_hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.pairs = PathBuf::new();
        semantic.labels = PathBuf::new();
        semantic.out_dir = PathBuf::new();
        semantic.source.fixture_dir = PathBuf::new();
        semantic.serve = ServeSection::default();
        // stage parallelism does not change outputs
        semantic.harvest.concurrency = 1;
        let bytes = serde_json::to_vec(&semantic).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
