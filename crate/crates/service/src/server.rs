//! HTTP backend for severity calibration and sample review.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use medq_core::model::{DegradationType, DiscardReason, Modality, ReviewStatusKind, Severity};
use medq_core::review::{render_preview, DEFAULT_PAGE_SIZE};
use medq_core::{Image, Manifest, ReviewAction, ReviewDecision, ReviewStore, SeverityTable, ThresholdLabel};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub const ANNOTATOR_HEADER: &str = "x-annotator";

pub struct AppState {
    store: RwLock<ReviewStore>,
    /// Directory manifest image paths are relative to.
    root: PathBuf,
    table: SeverityTable,
}

impl AppState {
    pub fn new(store: ReviewStore, root: impl Into<PathBuf>, table: SeverityTable) -> Self {
        Self {
            store: RwLock::new(store),
            root: root.into(),
            table,
        }
    }

    /// Opens the manifest and the decision log next to it.
    pub fn open(manifest: &Path, decisions: &Path, table: SeverityTable) -> medq_core::Result<Self> {
        let m = Manifest::read(manifest)?;
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(ReviewStore::open(m, decisions)?, root, table))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, e.to_string())
}

fn annotator(explicit: Option<String>, headers: &HeaderMap) -> Result<String, ApiError> {
    explicit
        .or_else(|| {
            headers
                .get(ANNOTATOR_HEADER)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        })
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| bad("annotator id is required"))
}

#[derive(Deserialize)]
struct QueueQuery {
    annotator: Option<String>,
    #[serde(default = "pending")]
    status: ReviewStatusKind,
    #[serde(default)]
    page: usize,
    page_size: Option<usize>,
}

fn pending() -> ReviewStatusKind {
    ReviewStatusKind::Pending
}

async fn queue(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<QueueQuery>,
) -> Result<Response, ApiError> {
    let who = annotator(q.annotator, &headers)?;
    let store = app.store.read().expect("store lock");
    let page = store
        .queue(&who, q.status, q.page, q.page_size.unwrap_or(DEFAULT_PAGE_SIZE))
        .map_err(bad)?;
    Ok(Json(page).into_response())
}

#[derive(Deserialize)]
struct PreviewQuery {
    image: String,
    #[serde(rename = "type")]
    kind: String,
    t: f64,
}

async fn preview(State(app): State<Arc<AppState>>, Query(q): Query<PreviewQuery>) -> Result<Response, ApiError> {
    let kind: DegradationType = q.kind.parse().map_err(bad)?;
    if !(0.0..=1.0).contains(&q.t) {
        return Err(bad(format!("t = {} is outside [0, 1]", q.t)));
    }
    let (path, modality) = {
        let store = app.store.read().expect("store lock");
        let m = store.manifest();
        let sample = m
            .get(&q.image)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown image `{}`", q.image)))?;
        // Previews always start from the clean rendering of the pair.
        let clean = m
            .samples
            .iter()
            .find(|s| s.pair_id == sample.pair_id && s.severity() == Severity::L0)
            .unwrap_or(sample);
        (app.root.join(&clean.image_path), sample.modality)
    };
    if !kind.supports(modality) {
        return Err(bad(medq_core::Error::Incompatible { kind, modality }));
    }
    let app2 = app.clone();
    let png = tokio::task::spawn_blocking(move || {
        let img = Image::load(&path)?;
        render_preview(&img, modality, kind, q.t, &app2.table)?.to_png_bytes()
    })
    .await
    .expect("preview task panicked")
    .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct ThresholdBody {
    #[serde(rename = "type")]
    kind: DegradationType,
    /// Defaults to the modality of `image_id`.
    modality: Option<Modality>,
    image_id: String,
    t_l1: f64,
    t_l2: f64,
    annotator: Option<String>,
}

async fn threshold(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(body): Json<ThresholdBody>,
) -> Result<Response, ApiError> {
    let who = annotator(body.annotator, &headers)?;
    let mut store = app.store.write().expect("store lock");
    let modality = match body.modality {
        Some(m) => m,
        None => store
            .manifest()
            .get(&body.image_id)
            .map(|s| s.modality)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown image `{}`", body.image_id)))?,
    };
    let label = ThresholdLabel {
        kind: body.kind,
        modality,
        image_id: body.image_id,
        t_l1: body.t_l1,
        t_l2: body.t_l2,
        annotator: who,
        timestamp: 0,
    };
    let id = store.record_threshold(label).map_err(bad)?;
    let stored = store.thresholds()[id].clone();
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "label": stored }))).into_response())
}

#[derive(Deserialize)]
struct ReviewBody {
    sample_id: String,
    action: ReviewAction,
    reason: Option<DiscardReason>,
    annotator: Option<String>,
}

async fn review(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(body): Json<ReviewBody>,
) -> Result<Response, ApiError> {
    let decision = ReviewDecision {
        annotator: annotator(body.annotator, &headers)?,
        sample_id: body.sample_id,
        action: body.action,
        reason: body.reason,
        timestamp: 0,
    };
    decision.validate().map_err(bad)?;
    let mut store = app.store.write().expect("store lock");
    if store.manifest().get(&decision.sample_id).is_none() {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("unknown sample `{}`", decision.sample_id),
        ));
    }
    let stored = store
        .record_review(decision)
        .map_err(|e| ApiError(StatusCode::CONFLICT, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn export_table(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let store = app.store.read().expect("store lock");
    let table = store.export_severity_table(&app.table).map_err(bad)?;
    Ok(([(header::CONTENT_TYPE, "application/toml")], table.to_toml()).into_response())
}

async fn export_decisions(State(app): State<Arc<AppState>>) -> Response {
    let body = app.store.read().expect("store lock").decisions_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

/// The API routes, plus `static_dir` (the review UI bundle) at `/` when given.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/preview", get(preview))
        .route("/api/threshold", post(threshold))
        .route("/api/review", post(review))
        .route("/api/export/severity-table", get(export_table))
        .route("/api/export/decisions", get(export_decisions))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr, static_dir: Option<&Path>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "calibration server listening");
    axum::serve(listener, router(state, static_dir)).await
}
