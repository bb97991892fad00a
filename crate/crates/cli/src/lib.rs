//! Pipeline orchestration behind the `skillvid` binary.

pub mod classify;
pub mod config;
pub mod pipeline;

use std::error::Error as StdError;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use classify::{classify_rows, Decision, DecisionRow};
pub use config::RunConfig;
pub use pipeline::{Pipeline, RunReport, StageOutcome, StageReport, StageStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Harvest,
    Featurize,
    Train,
    Eval,
    Classify,
    Export,
    Serve,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Harvest => "harvest",
            Stage::Featurize => "featurize",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Classify => "classify",
            Stage::Export => "export",
            Stage::Serve => "serve",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
}

impl PipelineError {
    pub fn stage(stage: Stage, source: impl Into<Box<dyn StdError + Send + Sync>>) -> Self {
        PipelineError::Stage {
            stage,
            source: source.into(),
        }
    }

    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}
