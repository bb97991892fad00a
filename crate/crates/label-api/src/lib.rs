//! HTTP service behind the labeling UI.
//!
//! Serves candidates that still need a human label, accepts labels into
//! the append-only log, and exposes a review queue of predictions near the
//! decision boundary.
//!
//! Routes:
//!
//! - `GET  /api/queue/next?curator=&kind=unlabeled|review&lo=&hi=` (204 when drained)
//! - `POST /api/queue/skip` `{pair_id, video_id, curator_id}`
//! - `POST /api/labels` `{pair_id, video_id, label: "+"|"-", curator_id}`
//! - `GET  /api/stats`
//! - `GET  /api/pairs/{pair_id}/candidates`

mod dataset;
mod queue;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use skillvid_core::store::{append_labels, read_labels, ParseMode, StoreError};
use skillvid_core::{Label, LabelRecord, PairId};

pub use dataset::Dataset;
pub use queue::{
    Band, CandidateView, LabelQueue, PairCoverage, PairView, QueueItem, QueueKind, Stats, VideoStats, VideoView,
    LEASE_MINUTES,
};

pub const DEFAULT_PORT: u16 = 8787;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Server(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Directory with pairs.jsonl, candidates.jsonl, videos.jsonl and
    /// optionally decisions.jsonl.
    pub data_dir: PathBuf,
    pub labels_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub addr: SocketAddr,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    queue: Arc<Mutex<LabelQueue>>,
    labels_path: Arc<PathBuf>,
    clock: Clock,
}

impl AppState {
    /// Loads the dataset and replays the label log.
    pub fn load(data_dir: &std::path::Path, labels_path: PathBuf) -> Result<Self, StoreError> {
        let data = Dataset::load(data_dir)?;
        let log = read_labels(&labels_path, ParseMode::Strict)?.rows;
        Ok(Self::new(LabelQueue::new(data, &log), labels_path))
    }

    pub fn new(queue: LabelQueue, labels_path: PathBuf) -> Self {
        AppState {
            queue: Arc::new(Mutex::new(queue)),
            labels_path: Arc::new(labels_path),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LabelQueue> {
        self.queue.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    curator: Option<String>,
    kind: Option<String>,
    lo: Option<f64>,
    hi: Option<f64>,
}

async fn next_item(State(state): State<AppState>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let curator = q
        .curator
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "curator is required"))?;
    let kind = match q.kind.as_deref() {
        None | Some("unlabeled") => QueueKind::Unlabeled,
        Some("review") => QueueKind::Review,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown kind {other:?}; expected unlabeled or review"),
            ))
        }
    };
    let band = Band {
        lo: q.lo.unwrap_or(0.0),
        hi: q.hi.unwrap_or(1.0),
    };
    if !(0.0 <= band.lo && band.lo <= band.hi && band.hi <= 1.0) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "band must satisfy 0 <= lo <= hi <= 1",
        ));
    }
    let now = (state.clock)();
    match state.lock().next(&curator, kind, band, now) {
        Some(item) => Ok(Json(item).into_response()),
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Debug, Deserialize)]
pub struct SkipBody {
    pair_id: PairId,
    video_id: String,
    curator_id: String,
}

async fn skip(
    State(state): State<AppState>,
    body: Result<Json<SkipBody>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(b) = body?;
    let now = (state.clock)();
    if state.lock().skip(&b.curator_id, &b.pair_id, &b.video_id, now) {
        Ok(Json(json!({ "skipped": true })))
    } else {
        Err(ApiError::new(StatusCode::NOT_FOUND, "unknown candidate"))
    }
}

#[derive(Debug, Deserialize)]
pub struct LabelBody {
    pair_id: PairId,
    video_id: String,
    label: String,
    curator_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelAck {
    pub pair_id: PairId,
    pub video_id: String,
    pub effective_label: Label,
    pub curator_id: String,
    pub labeled_at: DateTime<Utc>,
}

async fn submit_label(
    State(state): State<AppState>,
    body: Result<Json<LabelBody>, JsonRejection>,
) -> Result<Json<LabelAck>, ApiError> {
    let Json(b) = body?;
    let label: Label = b
        .label
        .parse()
        .map_err(|e: skillvid_core::ValidationError| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if b.curator_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "curator_id is required"));
    }
    let record = LabelRecord {
        pair_id: b.pair_id,
        video_id: b.video_id,
        label,
        curator_id: b.curator_id,
        labeled_at: (state.clock)(),
    };

    // Holding the queue lock across the append keeps the log order and the
    // in-memory fold in step.
    let mut queue = state.lock();
    if !queue.dataset().has_candidate(&record.pair_id, &record.video_id) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("no candidate {} for pair {}", record.video_id, record.pair_id),
        ));
    }
    let effective = if queue.is_repeat(&record) {
        queue.effective(&record.pair_id, &record.video_id).cloned().expect("repeat has a label")
    } else {
        append_labels(&state.labels_path, std::slice::from_ref(&record)).map_err(|e| {
            log::error!("label append failed: {e}");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "could not persist label")
        })?;
        queue.apply(record).clone()
    };
    Ok(Json(LabelAck {
        pair_id: effective.pair_id,
        video_id: effective.video_id,
        effective_label: effective.label,
        curator_id: effective.curator_id,
        labeled_at: effective.labeled_at,
    }))
}

async fn stats(State(state): State<AppState>) -> Json<Stats> {
    Json(state.lock().stats())
}

async fn pair_candidates(
    State(state): State<AppState>,
    Path(pair_id): Path<String>,
) -> Result<Json<Vec<CandidateView>>, ApiError> {
    state
        .lock()
        .pair_candidates(&PairId::from(pair_id.as_str()))
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown pair {pair_id}")))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/queue/next", get(next_item))
        .route("/api/queue/skip", post(skip))
        .route("/api/labels", post(submit_label))
        .route("/api/stats", get(stats))
        .route("/api/pairs/{pair_id}/candidates", get(pair_candidates))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Runs the server until the process is stopped.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let state = AppState::load(&config.data_dir, config.labels_path.clone())?;
    let app = router(state, config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.addr,
            source,
        })?;
    log::info!("label service listening on http://{}", config.addr);
    axum::serve(listener, app).await?;
    Ok(())
}
