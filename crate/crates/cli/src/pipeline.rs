//! The stage sequence harvest -> featurize -> train -> eval -> classify.
//!
//! Every stage writes into the run's output directory, records a
//! [`StageRecord`] keyed by a hash of exactly the inputs it read, and is
//! skipped when that record is still current.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skillvid_core::embed::{Embedder, HashedEmbedder, RemoteEmbedder};
use skillvid_core::eval::{emit_report, split_train_test, sweep, EvalReport};
use skillvid_core::featurize::{build_rows, FeatureRow, FEATURE_SCHEMA_VERSION};
use skillvid_core::forest::{cross_validate, load_model, save_model, train_forest, TrainingSet, FORMAT_VERSION};
use skillvid_core::harvest::{harvest_all, HarvestOptions};
use skillvid_core::source::{FixtureSource, RemoteSource, SourceKind, VideoSource};
use skillvid_core::store::{
    export_training_set, read_jsonl, read_pairs_csv, sha256_file, write_atomic, write_jsonl, DatasetManifest,
    Reconciliation, StageRecord, MANIFEST_FILE,
};
use skillvid_core::{Candidate, PairId, TitleSkillPair, VideoRecord};

use crate::classify::{classify_rows, Decision};
use crate::config::{EmbedProvider, RunConfig};
use crate::{PipelineError, Stage};

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const VIDEOS_FILE: &str = "videos.jsonl";
pub const HARVEST_FILE: &str = "harvest.jsonl";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const MODEL_FILE: &str = "model.forest";
pub const CV_FILE: &str = "cv.json";
pub const SPLIT_FILE: &str = "split.json";
pub const TEST_FILE: &str = "test.jsonl";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const METRICS_FILE: &str = "metrics.json";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const RUN_REPORT_FILE: &str = "run_report.json";

pub const RUN_STAGES: [Stage; 5] = [Stage::Harvest, Stage::Featurize, Stage::Train, Stage::Eval, Stage::Classify];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutcome {
    Ran { summary: String },
    UpToDate,
}

impl std::fmt::Display for StageOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageOutcome::Ran { summary } => f.write_str(summary),
            StageOutcome::UpToDate => f.write_str("up-to-date"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ran,
    UpToDate,
    Failed,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub seconds: f64,
}

/// Written as `run_report.json` after every `run`, including failed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub ok: bool,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageReport>,
}

/// One line of `harvest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestLine {
    pub pair_id: PairId,
    pub job_title: String,
    pub skill: String,
    pub n_candidates: usize,
    pub exhausted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub seed: u64,
    pub config_hash: String,
    pub split_ratio: f64,
    pub n_labeled: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_positive: usize,
    pub test_positive: usize,
    pub reconciliation: Reconciliation,
}

/// Length-prefixed SHA-256 over `parts`.
fn digest<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("value serializes")
}

/// Names and contents of the regular files directly under `dir`.
fn dir_hash(dir: &Path) -> std::io::Result<String> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.retain(|p| p.is_file());
    entries.sort();
    let mut h = Sha256::new();
    for p in entries {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update([0]);
        h.update(Sha256::digest(std::fs::read(&p)?));
    }
    Ok(hex::encode(h.finalize()))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub struct Pipeline {
    pub config: RunConfig,
    /// Run stages even when their records are current.
    pub force: bool,
    config_hash: String,
}

impl Pipeline {
    /// Validates `config` and creates the output directory.
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(&config.out_dir).map_err(|e| {
            PipelineError::Config(format!("cannot create output directory {}: {e}", config.out_dir.display()))
        })?;
        Ok(Pipeline {
            config_hash: config.config_hash(),
            config,
            force: false,
        })
    }

    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn file_hash(&self, stage: Stage, path: &Path) -> Result<String, PipelineError> {
        if !path.exists() {
            return Err(PipelineError::stage(
                stage,
                format!("{} is missing; run the earlier stages first", path.display()),
            ));
        }
        sha256_file(path).map_err(|e| PipelineError::stage(stage, e))
    }

    /// Returns true when the stage may be skipped.
    fn up_to_date(&self, stage: Stage, input_hash: &str) -> Result<bool, PipelineError> {
        if self.force {
            return Ok(false);
        }
        let record = StageRecord::load(self.out_dir(), stage.as_str()).map_err(|e| PipelineError::stage(stage, e))?;
        Ok(record.is_some_and(|r| r.is_current(self.out_dir(), input_hash)))
    }

    fn complete(&self, stage: Stage, input_hash: &str, outputs: &[&str]) -> Result<(), PipelineError> {
        StageRecord::complete(self.out_dir(), stage.as_str(), input_hash, self.config.seed, outputs)
            .map_err(|e| PipelineError::stage(stage, e))?;
        Ok(())
    }

    /// Merges `counts` and `provider_id` into `manifest.json`, stamping the
    /// run's seed and config hash.
    fn update_manifest(
        &self,
        stage: Stage,
        counts: &[(&str, usize)],
        provider_id: Option<&str>,
    ) -> Result<(), PipelineError> {
        let path = self.path(MANIFEST_FILE);
        let mut m = if path.exists() {
            DatasetManifest::load(&path).map_err(|e| PipelineError::stage(stage, e))?
        } else {
            DatasetManifest {
                created_at: Utc::now(),
                seed: self.config.seed,
                config_hash: String::new(),
                provider_id: None,
                schema_versions: Default::default(),
                counts: Default::default(),
            }
        };
        m.seed = self.config.seed;
        m.config_hash = self.config_hash.clone();
        m.schema_versions.insert("features".into(), FEATURE_SCHEMA_VERSION.into());
        m.schema_versions.insert("feature_set".into(), self.config.schema.to_string());
        m.schema_versions.insert("model_format".into(), FORMAT_VERSION.to_string());
        if let Some(p) = provider_id {
            m.provider_id = Some(p.to_string());
        }
        for (name, n) in counts {
            m.counts.insert(name.to_string(), *n as u64);
        }
        m.save(&path).map_err(|e| PipelineError::stage(stage, e))
    }

    fn source(&self) -> Result<Box<dyn VideoSource>, PipelineError> {
        let cfg = self.config.source.config.clone();
        match cfg.kind {
            SourceKind::Fixture => FixtureSource::load(&self.config.source.fixture_dir, &cfg)
                .map(|s| Box::new(s) as Box<dyn VideoSource>)
                .map_err(|e| PipelineError::stage(Stage::Harvest, e)),
            SourceKind::Remote => RemoteSource::from_env(cfg)
                .map(|s| Box::new(s) as Box<dyn VideoSource>)
                .map_err(|e| PipelineError::Config(e.to_string())),
        }
    }

    fn embedder(&self) -> Result<Box<dyn Embedder>, PipelineError> {
        match self.config.embed.provider {
            EmbedProvider::Hashed => Ok(Box::new(HashedEmbedder)),
            EmbedProvider::Remote => RemoteEmbedder::from_env(&self.config.embed.endpoint_env)
                .map(|e| Box::new(e) as Box<dyn Embedder>)
                .map_err(|e| PipelineError::Config(e.to_string())),
        }
    }

    pub fn harvest(&self) -> Result<StageOutcome, PipelineError> {
        const STAGE: Stage = Stage::Harvest;
        self.config.check_environment(&[STAGE])?;
        let fail = |e: skillvid_core::store::StoreError| PipelineError::stage(STAGE, e);
        let pairs_hash = self.file_hash(STAGE, &self.config.pairs)?;
        let fixture_hash = match self.config.source.config.kind {
            SourceKind::Fixture => {
                dir_hash(&self.config.source.fixture_dir).map_err(|e| {
                    PipelineError::stage(STAGE, format!("{}: {e}", self.config.source.fixture_dir.display()))
                })?
            }
            // A remote harvest is a snapshot; rerunning it needs --force.
            SourceKind::Remote => String::new(),
        };
        let input = digest([
            STAGE.as_str().as_bytes(),
            &json(&self.config.source.config),
            &json(&self.config.harvest.cap),
            pairs_hash.as_bytes(),
            fixture_hash.as_bytes(),
        ]);
        if self.up_to_date(STAGE, &input)? {
            return Ok(StageOutcome::UpToDate);
        }

        let pairs = read_pairs_csv(&self.config.pairs).map_err(fail)?;
        let source = self.source()?;
        let opts = HarvestOptions {
            cap: self.config.harvest.cap,
            max_pages_per_query: self.config.source.config.max_pages_per_query as usize,
        };
        let outcome = harvest_all(&pairs, source.as_ref(), opts, self.config.harvest.concurrency)
            .map_err(|e| PipelineError::stage(STAGE, e))?;

        let mut candidates: Vec<Candidate> = Vec::new();
        let mut videos: Vec<VideoRecord> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut lines: Vec<HarvestLine> = Vec::with_capacity(pairs.len());
        let mut results = outcome.results.iter().peekable();
        let failures: HashMap<&PairId, String> =
            outcome.failures.iter().map(|f| (&f.pair_id, f.error.to_string())).collect();
        for pair in &pairs {
            if let Some(error) = failures.get(&pair.pair_id) {
                log::warn!("harvest: {error}");
                lines.push(HarvestLine {
                    pair_id: pair.pair_id.clone(),
                    job_title: pair.job_title.clone(),
                    skill: pair.skill.clone(),
                    n_candidates: 0,
                    exhausted: false,
                    error: Some(error.clone()),
                });
                continue;
            }
            let r = results.next().expect("one result per successful pair");
            debug_assert_eq!(r.pair_id, pair.pair_id);
            lines.push(HarvestLine {
                pair_id: pair.pair_id.clone(),
                job_title: pair.job_title.clone(),
                skill: pair.skill.clone(),
                n_candidates: r.candidates.len(),
                exhausted: r.exhausted,
                error: None,
            });
            candidates.extend(r.candidates.iter().cloned());
            for v in &r.videos {
                if seen.insert(v.video_id.clone()) {
                    videos.push(v.clone());
                }
            }
        }

        write_jsonl(&self.path(PAIRS_FILE), &pairs).map_err(fail)?;
        write_jsonl(&self.path(CANDIDATES_FILE), &candidates).map_err(fail)?;
        write_jsonl(&self.path(VIDEOS_FILE), &videos).map_err(fail)?;
        write_jsonl(&self.path(HARVEST_FILE), &lines).map_err(fail)?;
        self.update_manifest(
            STAGE,
            &[
                (PAIRS_FILE, pairs.len()),
                (CANDIDATES_FILE, candidates.len()),
                (VIDEOS_FILE, videos.len()),
                (HARVEST_FILE, lines.len()),
            ],
            None,
        )?;
        self.complete(STAGE, &input, &[PAIRS_FILE, CANDIDATES_FILE, VIDEOS_FILE, HARVEST_FILE])?;
        Ok(StageOutcome::Ran {
            summary: format!(
                "{} pairs, {} candidates, {} videos, {} failed",
                pairs.len(),
                candidates.len(),
                videos.len(),
                outcome.failures.len()
            ),
        })
    }

    pub fn featurize(&self) -> Result<StageOutcome, PipelineError> {
        const STAGE: Stage = Stage::Featurize;
        self.config.check_environment(&[STAGE])?;
        let fail = |e: skillvid_core::store::StoreError| PipelineError::stage(STAGE, e);
        let mut parts = vec![
            STAGE.as_str().as_bytes().to_vec(),
            json(&self.config.schema),
            json(&self.config.embed.provider),
            FEATURE_SCHEMA_VERSION.as_bytes().to_vec(),
        ];
        if self.config.embed.provider == EmbedProvider::Remote {
            parts.push(std::env::var(&self.config.embed.endpoint_env).unwrap_or_default().into_bytes());
        }
        for name in [PAIRS_FILE, CANDIDATES_FILE, VIDEOS_FILE] {
            parts.push(self.file_hash(STAGE, &self.path(name))?.into_bytes());
        }
        let input = digest(parts.iter().map(Vec::as_slice));
        if self.up_to_date(STAGE, &input)? {
            return Ok(StageOutcome::UpToDate);
        }

        let mode = self.config.parse_mode();
        let pairs: Vec<TitleSkillPair> = read_jsonl(&self.path(PAIRS_FILE), mode).map_err(fail)?.rows;
        let candidates: Vec<Candidate> = read_jsonl(&self.path(CANDIDATES_FILE), mode).map_err(fail)?.rows;
        let videos: Vec<VideoRecord> = read_jsonl(&self.path(VIDEOS_FILE), mode).map_err(fail)?.rows;
        let pair_by_id: HashMap<&PairId, &TitleSkillPair> = pairs.iter().map(|p| (&p.pair_id, p)).collect();
        let video_by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
        let mut jobs = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let pair = pair_by_id
                .get(&c.pair_id)
                .ok_or_else(|| PipelineError::stage(STAGE, format!("candidate for unknown pair {}", c.pair_id)))?;
            let video = video_by_id
                .get(c.video_id.as_str())
                .ok_or_else(|| PipelineError::stage(STAGE, format!("no details for video {}", c.video_id)))?;
            jobs.push((*pair, *video));
        }

        let embedder = self.embedder()?;
        let provider = embedder.provider_id().to_string();
        let rows = build_rows(&jobs, self.config.schema, Some(embedder.as_ref()))
            .map_err(|e| PipelineError::stage(STAGE, e))?;
        write_jsonl(&self.path(FEATURES_FILE), &rows).map_err(fail)?;
        self.update_manifest(STAGE, &[(FEATURES_FILE, rows.len())], Some(&provider))?;
        self.complete(STAGE, &input, &[FEATURES_FILE])?;
        Ok(StageOutcome::Ran {
            summary: format!("{} rows, schema {}", rows.len(), self.config.schema),
        })
    }

    pub fn train(&self) -> Result<StageOutcome, PipelineError> {
        const STAGE: Stage = Stage::Train;
        let fail = |e: skillvid_core::store::StoreError| PipelineError::stage(STAGE, e);
        let cfg = &self.config;
        let input = digest([
            STAGE.as_str().as_bytes(),
            &json(&cfg.seed),
            &json(&cfg.train),
            &json(&cfg.lenient),
            self.file_hash(STAGE, &self.path(FEATURES_FILE))?.as_bytes(),
            self.file_hash(STAGE, &cfg.labels)?.as_bytes(),
        ]);
        if self.up_to_date(STAGE, &input)? {
            return Ok(StageOutcome::UpToDate);
        }

        let export = export_training_set(&cfg.labels, &self.path(FEATURES_FILE), cfg.parse_mode()).map_err(fail)?;
        let r = export.reconciliation;
        if r.unlabeled > 0 || r.orphan_labels > 0 {
            log::warn!(
                "train: {} feature rows have no label, {} labels have no feature row",
                r.unlabeled,
                r.orphan_labels
            );
        }
        let (train, test) =
            split_train_test(&export.rows, cfg.train.split_ratio, cfg.seed).map_err(|e| PipelineError::stage(STAGE, e))?;
        let set = TrainingSet::from_rows(&train).map_err(|e| PipelineError::stage(STAGE, e))?;
        let cv = cross_validate(&set, &cfg.grid(), cfg.train.folds, cfg.seed)
            .map_err(|e| PipelineError::stage(STAGE, e))?;
        let model = train_forest(&set, &cv.selected).map_err(|e| PipelineError::stage(STAGE, e))?;

        let positives = |rows: &[FeatureRow]| rows.iter().filter(|r| r.label.is_some_and(|l| l.is_positive())).count();
        let split = SplitSummary {
            seed: cfg.seed,
            config_hash: self.config_hash.clone(),
            split_ratio: cfg.train.split_ratio,
            n_labeled: export.rows.len(),
            n_train: train.len(),
            n_test: test.len(),
            train_positive: positives(&train),
            test_positive: positives(&test),
            reconciliation: r,
        };
        let io = |name: &str| {
            let path = self.path(name);
            move |e: std::io::Error| PipelineError::stage(STAGE, format!("{}: {e}", path.display()))
        };
        save_model(&model, &self.path(MODEL_FILE)).map_err(|e| PipelineError::stage(STAGE, e))?;
        write_json_file(&self.path(CV_FILE), &cv).map_err(io(CV_FILE))?;
        write_json_file(&self.path(SPLIT_FILE), &split).map_err(io(SPLIT_FILE))?;
        write_jsonl(&self.path(TEST_FILE), &test).map_err(fail)?;
        self.update_manifest(STAGE, &[(TEST_FILE, test.len())], None)?;
        self.complete(STAGE, &input, &[MODEL_FILE, CV_FILE, SPLIT_FILE, TEST_FILE])?;
        Ok(StageOutcome::Ran {
            summary: format!(
                "{} train / {} test rows, selected {} trees depth {:?} min_leaf {}, model {}",
                train.len(),
                test.len(),
                cv.selected.n_trees,
                cv.selected.max_depth,
                cv.selected.min_leaf,
                &model.content_hash[..12]
            ),
        })
    }

    pub fn eval(&self) -> Result<StageOutcome, PipelineError> {
        const STAGE: Stage = Stage::Eval;
        let input = digest([
            STAGE.as_str().as_bytes(),
            &json(&self.config.thresholds()),
            &json(&self.config.eval.fpr_target),
            self.file_hash(STAGE, &self.path(MODEL_FILE))?.as_bytes(),
            self.file_hash(STAGE, &self.path(TEST_FILE))?.as_bytes(),
        ]);
        if self.up_to_date(STAGE, &input)? {
            return Ok(StageOutcome::UpToDate);
        }
        let model = load_model(&self.path(MODEL_FILE)).map_err(|e| PipelineError::stage(STAGE, e))?;
        let test: Vec<FeatureRow> = read_jsonl(&self.path(TEST_FILE), self.config.parse_mode())
            .map_err(|e| PipelineError::stage(STAGE, e))?
            .rows;
        let report = sweep(&model, &test, &self.config.thresholds(), self.config.eval.fpr_target)
            .map_err(|e| PipelineError::stage(STAGE, e))?;
        emit_report(&report, self.out_dir()).map_err(|e| PipelineError::stage(STAGE, e))?;
        self.complete(STAGE, &input, &[SWEEP_CSV, SWEEP_SVG, METRICS_FILE])?;
        Ok(StageOutcome::Ran {
            summary: summarize(&report),
        })
    }

    pub fn classify(&self) -> Result<StageOutcome, PipelineError> {
        self.classify_files(&self.path(MODEL_FILE), &self.path(FEATURES_FILE), &self.path(DECISIONS_FILE))
    }

    /// Classifies `features` with `model` into `output`. Only the default
    /// locations take part in stage records.
    pub fn classify_files(&self, model: &Path, features: &Path, output: &Path) -> Result<StageOutcome, PipelineError> {
        const STAGE: Stage = Stage::Classify;
        let tracked = model == self.path(MODEL_FILE)
            && features == self.path(FEATURES_FILE)
            && output == self.path(DECISIONS_FILE);
        let input = digest([
            STAGE.as_str().as_bytes(),
            &json(&self.config.classify.threshold),
            self.file_hash(STAGE, model)?.as_bytes(),
            self.file_hash(STAGE, features)?.as_bytes(),
        ]);
        if tracked && self.up_to_date(STAGE, &input)? {
            return Ok(StageOutcome::UpToDate);
        }
        let model = load_model(model).map_err(|e| PipelineError::stage(STAGE, e))?;
        let rows: Vec<FeatureRow> = read_jsonl(features, self.config.parse_mode())
            .map_err(|e| PipelineError::stage(STAGE, e))?
            .rows;
        if rows.is_empty() {
            log::warn!("classify: {} has no rows", features.display());
        }
        let decisions =
            classify_rows(&model, &rows, self.config.classify.threshold).map_err(|e| PipelineError::stage(STAGE, e))?;
        write_jsonl(output, &decisions).map_err(|e| PipelineError::stage(STAGE, e))?;
        let relevant = decisions.iter().filter(|d| d.decision == Decision::Relevant).count();
        if tracked {
            self.update_manifest(STAGE, &[(DECISIONS_FILE, decisions.len())], None)?;
            self.complete(STAGE, &input, &[DECISIONS_FILE])?;
        }
        Ok(StageOutcome::Ran {
            summary: format!(
                "{} rows, {} relevant at threshold {}",
                decisions.len(),
                relevant,
                self.config.classify.threshold
            ),
        })
    }

    /// Writes the labeled join of `features.jsonl` and the label log to
    /// `output`.
    pub fn export(&self, output: &Path) -> Result<Reconciliation, PipelineError> {
        const STAGE: Stage = Stage::Export;
        let features = self.path(FEATURES_FILE);
        self.file_hash(STAGE, &features)?;
        self.file_hash(STAGE, &self.config.labels)?;
        let export = export_training_set(&self.config.labels, &features, self.config.parse_mode())
            .map_err(|e| PipelineError::stage(STAGE, e))?;
        write_jsonl(output, &export.rows).map_err(|e| PipelineError::stage(STAGE, e))?;
        Ok(export.reconciliation)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        match stage {
            Stage::Harvest => self.harvest(),
            Stage::Featurize => self.featurize(),
            Stage::Train => self.train(),
            Stage::Eval => self.eval(),
            Stage::Classify => self.classify(),
            Stage::Export | Stage::Serve => Err(PipelineError::Config(format!("{stage} is not a pipeline stage"))),
        }
    }

    /// Runs every stage in order, stopping at the first failure, and writes
    /// `run_report.json`. `on_stage` sees each stage as it finishes.
    pub fn run_all(&self, mut on_stage: impl FnMut(&StageReport)) -> (RunReport, Result<(), PipelineError>) {
        let mut stages = Vec::new();
        let mut result = self.config.check_environment(&RUN_STAGES);
        if result.is_ok() {
            for stage in RUN_STAGES {
                let start = Instant::now();
                let outcome = self.run_stage(stage);
                let seconds = start.elapsed().as_secs_f64();
                let report = match &outcome {
                    Ok(StageOutcome::UpToDate) => StageReport {
                        stage,
                        status: StageStatus::UpToDate,
                        detail: None,
                        seconds,
                    },
                    Ok(StageOutcome::Ran { summary }) => StageReport {
                        stage,
                        status: StageStatus::Ran,
                        detail: Some(summary.clone()),
                        seconds,
                    },
                    Err(e) => StageReport {
                        stage,
                        status: StageStatus::Failed,
                        detail: Some(error_chain(e)),
                        seconds,
                    },
                };
                on_stage(&report);
                stages.push(report);
                if let Err(e) = outcome {
                    result = Err(e);
                    break;
                }
            }
        }
        for stage in RUN_STAGES.iter().skip(stages.len()) {
            stages.push(StageReport {
                stage: *stage,
                status: StageStatus::NotRun,
                detail: None,
                seconds: 0.0,
            });
        }
        let report = RunReport {
            seed: self.config.seed,
            config_hash: self.config_hash.clone(),
            ok: result.is_ok(),
            exit_code: result.as_ref().err().map_or(0, PipelineError::exit_code),
            error: result.as_ref().err().map(|e| error_chain(e)),
            stages,
        };
        if let Err(e) = write_json_file(&self.path(RUN_REPORT_FILE), &report) {
            log::error!("could not write {RUN_REPORT_FILE}: {e}");
        }
        (report, result)
    }
}

/// `error` followed by each of its sources.
pub fn error_chain(error: &(dyn std::error::Error + 'static)) -> String {
    let mut out = error.to_string();
    let mut cur = error.source();
    while let Some(e) = cur {
        let s = e.to_string();
        if !out.contains(&s) {
            out.push_str(": ");
            out.push_str(&s);
        }
        cur = e.source();
    }
    out
}

pub fn summarize(report: &EvalReport) -> String {
    let at = &report.at_half;
    let fpr = match report.threshold_at_fpr_target {
        Some(t) => format!("{t:.2}"),
        None => "none".into(),
    };
    format!(
        "{} test rows / {} pairs; at 0.5: precision {:.3} recall {:.3} f1 {:.3}; threshold for FPR <= {}: {}",
        report.n_test_rows, report.n_test_pairs, at.precision, at.recall, at.f1, report.fpr_target, fpr
    )
}
