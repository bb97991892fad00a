//! Client for the public video search API (search.list / videos.list).

use std::collections::{HashMap, HashSet};
use std::env;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use super::{
    DetailBatch, RateLimiter, SearchPage, SourceConfig, SourceError, VideoSource,
    MAX_IDS_PER_DETAILS_CALL,
};
use crate::http::{retry, Attempt, HttpResponse, HttpTransport, ReqwestTransport, RetryError, RetryPolicy};
use crate::querygen::SearchQuery;
use crate::types::VideoRecord;

pub const DEFAULT_API_BASE: &str = "https://www.googleapis.com/youtube/v3";

/// Consecutive empty-but-continued pages followed before giving up.
const MAX_EMPTY_HOPS: usize = 3;

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct RemoteSource {
    config: SourceConfig,
    api_key: String,
    base_url: String,
    transport: Box<dyn HttpTransport>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    clock: Clock,
}

impl std::fmt::Debug for RemoteSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteSource")
            .field("base_url", &self.base_url)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl RemoteSource {
    /// Reads the API key from the configured environment variable. Fails
    /// before any network traffic if it is unset.
    pub fn from_env(config: SourceConfig) -> Result<Self, SourceError> {
        config.validate()?;
        let api_key = api_key_from_env(&config)?;
        let transport = ReqwestTransport::new(Duration::from_secs(30)).map_err(|e| {
            SourceError::Config(format!("cannot build HTTP client: {e}"))
        })?;
        Ok(Self::with_transport(config, api_key, Box::new(transport)))
    }

    pub fn with_transport(
        config: SourceConfig,
        api_key: String,
        transport: Box<dyn HttpTransport>,
    ) -> Self {
        RemoteSource {
            limiter: RateLimiter::new(config.qps_limit),
            retry: config.retry_policy(),
            config,
            api_key,
            base_url: DEFAULT_API_BASE.to_string(),
            transport,
            clock: Arc::new(Utc::now),
        }
    }

    pub fn base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into().trim_end_matches('/').to_string();
        self
    }

    pub fn retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    /// Overrides the snapshot timestamp source.
    pub fn clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    fn call(&self, endpoint: &str, params: Vec<(String, String)>, context: &str) -> Result<String, SourceError> {
        let url = format!("{}/{endpoint}", self.base_url);
        let outcome = retry(&self.retry, || {
            self.limiter.acquire();
            match self.transport.get(&url, &params) {
                Err(e) => Attempt::Retryable(e.to_string()),
                Ok(resp) => classify(resp, context),
            }
        });
        match outcome {
            Ok(body) => Ok(body),
            Err(RetryError::Exhausted { attempts, last }) => Err(SourceError::Transport {
                attempts,
                message: last,
            }),
            Err(RetryError::Fatal(e)) => Err(e),
        }
    }

    fn search_once(&self, query: &SearchQuery, token: Option<&str>) -> Result<SearchPage, SourceError> {
        let mut params = vec![
            ("part".to_string(), "id".to_string()),
            ("q".to_string(), query.text.clone()),
            ("type".to_string(), "video".to_string()),
            ("relevanceLanguage".to_string(), self.config.language.clone()),
            ("videoCategoryId".to_string(), self.config.education_category_id.clone()),
            ("maxResults".to_string(), self.config.page_size.to_string()),
            ("key".to_string(), self.api_key.clone()),
        ];
        if let Some(t) = token {
            params.push(("pageToken".to_string(), t.to_string()));
        }
        let body = self.call("search", params, &query.text)?;
        let parsed: SearchResponse = parse_body(&body)?;
        let mut seen = HashSet::new();
        let video_ids = parsed
            .items
            .into_iter()
            .filter_map(|item| item.id.video_id)
            .filter(|id| seen.insert(id.clone()))
            .collect();
        Ok(SearchPage {
            video_ids,
            next_page_token: parsed.next_page_token.filter(|t| !t.is_empty()),
        })
    }

    fn details_chunk(&self, ids: &[String], now: DateTime<Utc>, out: &mut DetailBatch) -> Result<(), SourceError> {
        let params = vec![
            ("part".to_string(), "snippet,statistics,contentDetails".to_string()),
            ("id".to_string(), ids.join(",")),
            ("maxResults".to_string(), ids.len().to_string()),
            ("key".to_string(), self.api_key.clone()),
        ];
        let body = self.call("videos", params, "videos.list")?;
        let parsed: VideosResponse = parse_body(&body)?;
        let mut by_id: HashMap<String, VideoItem> =
            parsed.items.into_iter().map(|item| (item.id.clone(), item)).collect();
        for id in ids {
            let record = by_id
                .remove(id)
                .map(|item| item.into_record(now, &self.config.language));
            match record {
                Some(Ok(r)) => out.records.push(r),
                Some(Err(msg)) => {
                    log::warn!("video {id}: unusable details ({msg})");
                    out.missing.push(id.clone());
                }
                None => out.missing.push(id.clone()),
            }
        }
        Ok(())
    }
}

pub(crate) fn api_key_from_env(config: &SourceConfig) -> Result<String, SourceError> {
    match env::var(&config.api_key_env) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(SourceError::MissingApiKey {
            var: config.api_key_env.clone(),
        }),
    }
}

fn classify(resp: HttpResponse, context: &str) -> Attempt<String, SourceError> {
    if resp.is_success() {
        return Attempt::Done(resp.body);
    }
    let reason = error_reason(&resp.body).unwrap_or_default();
    match resp.status {
        403 if matches!(reason.as_str(), "quotaExceeded" | "dailyLimitExceeded") => {
            Attempt::Fatal(SourceError::QuotaExceeded {
                context: context.to_string(),
            })
        }
        403 if reason == "rateLimitExceeded" || reason == "userRateLimitExceeded" => {
            Attempt::Retryable(format!("HTTP 403 {reason}"))
        }
        429 | 500..=599 => Attempt::Retryable(format!("HTTP {}", resp.status)),
        status => Attempt::Fatal(SourceError::Response {
            status,
            message: truncate(&resp.body, 200),
        }),
    }
}

fn error_reason(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.pointer("/error/errors/0/reason")
        .and_then(|r| r.as_str())
        .map(str::to_string)
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, SourceError> {
    serde_json::from_str(body).map_err(|e| SourceError::Response {
        status: 200,
        message: format!("malformed body: {e}"),
    })
}

impl VideoSource for RemoteSource {
    fn search(&self, query: &SearchQuery, page_token: Option<&str>) -> Result<SearchPage, SourceError> {
        let mut page = self.search_once(query, page_token)?;
        // an empty page with a continuation token is skipped over
        let mut hops = 0;
        while page.video_ids.is_empty() && page.next_page_token.is_some() {
            hops += 1;
            if hops > MAX_EMPTY_HOPS {
                page.next_page_token = None;
                break;
            }
            let token = page.next_page_token.take();
            page = self.search_once(query, token.as_deref())?;
        }
        Ok(page)
    }

    fn fetch_details(&self, video_ids: &[String]) -> Result<DetailBatch, SourceError> {
        if video_ids.is_empty() {
            return Err(SourceError::EmptyIdList);
        }
        let now = (self.clock)();
        let mut batch = DetailBatch::default();
        for chunk in video_ids.chunks(MAX_IDS_PER_DETAILS_CALL) {
            self.details_chunk(chunk, now, &mut batch)?;
        }
        Ok(batch)
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchResponse {
    #[serde(default)]
    items: Vec<SearchItem>,
    next_page_token: Option<String>,
}

#[derive(Deserialize)]
struct SearchItem {
    id: SearchItemId,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SearchItemId {
    video_id: Option<String>,
}

#[derive(Deserialize)]
struct VideosResponse {
    #[serde(default)]
    items: Vec<VideoItem>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct VideoItem {
    id: String,
    snippet: Snippet,
    #[serde(default)]
    statistics: Statistics,
    content_details: Option<ContentDetails>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Snippet {
    title: String,
    #[serde(default)]
    description: String,
    published_at: DateTime<Utc>,
    #[serde(default)]
    category_id: String,
    default_audio_language: Option<String>,
    default_language: Option<String>,
}

/// Counts arrive as decimal strings and are omitted when hidden.
#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct Statistics {
    view_count: Option<String>,
    like_count: Option<String>,
    dislike_count: Option<String>,
    comment_count: Option<String>,
}

#[derive(Deserialize)]
struct ContentDetails {
    duration: Option<String>,
}

impl VideoItem {
    fn into_record(self, fetched_at: DateTime<Utc>, default_language: &str) -> Result<VideoRecord, String> {
        fn count(field: &str, v: &Option<String>) -> Result<u64, String> {
            match v {
                None => Ok(0),
                Some(s) => s.parse().map_err(|_| format!("{field} is not a count: {s:?}")),
            }
        }
        let duration_s = match self.content_details.and_then(|c| c.duration) {
            Some(d) => parse_iso8601_duration(&d).ok_or_else(|| format!("bad duration {d:?}"))?,
            None => 0,
        };
        let language = self
            .snippet
            .default_audio_language
            .or(self.snippet.default_language)
            .map(|l| l.split('-').next().unwrap_or_default().to_lowercase())
            .filter(|l| !l.is_empty())
            .unwrap_or_else(|| default_language.to_string());
        let record = VideoRecord {
            view_count: count("viewCount", &self.statistics.view_count)?,
            like_count: count("likeCount", &self.statistics.like_count)?,
            dislike_count: count("dislikeCount", &self.statistics.dislike_count)?,
            comment_count: count("commentCount", &self.statistics.comment_count)?,
            dislike_missing: self.statistics.dislike_count.is_none(),
            video_id: self.id,
            title: self.snippet.title,
            description: self.snippet.description,
            published_at: self.snippet.published_at,
            duration_s,
            category_id: self.snippet.category_id,
            language,
            fetched_at,
        };
        record.validate().map_err(|e| e.to_string())?;
        Ok(record)
    }
}

/// Parses durations like `PT1H2M3S`, `P1DT30S`, or `P2W` into seconds.
pub fn parse_iso8601_duration(s: &str) -> Option<u64> {
    let rest = s.strip_prefix('P')?;
    let (date, time) = match rest.split_once('T') {
        Some((d, t)) => (d, Some(t)),
        None => (rest, None),
    };
    fn fold(part: &str, units: &[(char, u64)]) -> Option<u64> {
        let mut total = 0u64;
        let mut num = String::new();
        for c in part.chars() {
            if c.is_ascii_digit() {
                num.push(c);
                continue;
            }
            let (_, mult) = units.iter().find(|(u, _)| *u == c)?;
            let n: u64 = num.parse().ok()?;
            total = total.checked_add(n.checked_mul(*mult)?)?;
            num.clear();
        }
        num.is_empty().then_some(total)
    }
    let mut total = fold(date, &[('W', 604_800), ('D', 86_400)])?;
    if let Some(t) = time {
        if t.is_empty() {
            return None;
        }
        total = total.checked_add(fold(t, &[('H', 3600), ('M', 60), ('S', 1)])?)?;
    }
    Some(total)
}
