//! Video search backends.
//!
//! [`RemoteSource`] talks to the public video search API; [`FixtureSource`]
//! replays recorded pages from JSON files. Both implement [`VideoSource`]
//! with the same contract, so harvesting code cannot tell them apart.

mod fixture;
mod ratelimit;
mod remote;

use serde::{Deserialize, Serialize};

pub use fixture::{FixtureFile, FixturePage, FixtureSource};
pub use ratelimit::RateLimiter;
pub use remote::{parse_iso8601_duration, RemoteSource, DEFAULT_API_BASE};

use crate::http::RetryPolicy;
use crate::querygen::SearchQuery;
use crate::types::VideoRecord;

/// Upper bound on ids per details call.
pub const MAX_IDS_PER_DETAILS_CALL: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchPage {
    pub video_ids: Vec<String>,
    pub next_page_token: Option<String>,
}

/// Records resolved by a details call plus the ids that could not be.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetailBatch {
    pub records: Vec<VideoRecord>,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SourceError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("API quota exceeded while running {context:?}")]
    QuotaExceeded { context: String },
    #[error("no fixture recorded for key {key:?}")]
    UnknownFixtureKey { key: String },
    #[error("details requested for an empty id list")]
    EmptyIdList,
    #[error("API key missing: environment variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("invalid source configuration: {0}")]
    Config(String),
    #[error("unexpected API response (status {status}): {message}")]
    Response { status: u16, message: String },
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

impl SourceError {
    /// Transport failures may succeed on a later run; everything else is
    /// terminal.
    pub fn is_retryable(&self) -> bool {
        matches!(self, SourceError::Transport { .. })
    }
}

pub trait VideoSource: Send + Sync {
    fn search(&self, query: &SearchQuery, page_token: Option<&str>)
        -> Result<SearchPage, SourceError>;

    /// One record per resolvable id, in input order; unresolvable ids are
    /// reported in [`DetailBatch::missing`].
    fn fetch_details(&self, video_ids: &[String]) -> Result<DetailBatch, SourceError>;
}

impl<S: VideoSource + ?Sized> VideoSource for &S {
    fn search(&self, q: &SearchQuery, t: Option<&str>) -> Result<SearchPage, SourceError> {
        (**self).search(q, t)
    }
    fn fetch_details(&self, ids: &[String]) -> Result<DetailBatch, SourceError> {
        (**self).fetch_details(ids)
    }
}

impl<S: VideoSource + ?Sized> VideoSource for Box<S> {
    fn search(&self, q: &SearchQuery, t: Option<&str>) -> Result<SearchPage, SourceError> {
        (**self).search(q, t)
    }
    fn fetch_details(&self, ids: &[String]) -> Result<DetailBatch, SourceError> {
        (**self).fetch_details(ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Remote,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub api_key_env: String,
    pub education_category_id: String,
    pub language: String,
    pub page_size: u32,
    pub max_pages_per_query: u32,
    /// Remote calls per second.
    pub qps_limit: f64,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            kind: SourceKind::Fixture,
            api_key_env: "VIDEO_API_KEY".to_string(),
            education_category_id: "27".to_string(),
            language: "en".to_string(),
            page_size: 25,
            max_pages_per_query: 3,
            qps_limit: 4.0,
            retry_attempts: 3,
            retry_base_ms: 500,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), SourceError> {
        if !(1..=50).contains(&self.page_size) {
            return Err(SourceError::Config(format!(
                "page_size must be in [1, 50], got {}",
                self.page_size
            )));
        }
        if self.max_pages_per_query < 1 {
            return Err(SourceError::Config("max_pages_per_query must be >= 1".into()));
        }
        if !(self.qps_limit.is_finite() && self.qps_limit > 0.0) {
            return Err(SourceError::Config(format!(
                "qps_limit must be positive, got {}",
                self.qps_limit
            )));
        }
        if self.retry_attempts < 1 {
            return Err(SourceError::Config("retry_attempts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retry_attempts,
            base_delay: std::time::Duration::from_millis(self.retry_base_ms),
            jitter: true,
        }
    }
}
