//! HTTP inference service.
//!
//! ```text
//! GET  /api/health   → {"status": "ok", "model_id": ..}
//! GET  /api/classes  → {"classes": [gloss, ..]}          (vocabulary order)
//! POST /api/predict?k=5
//!        multipart part `video`             → estimator → normalize → top-k
//!        application/json landmark document → validate  → normalize → top-k
//! ```
//!
//! The model is loaded once and shared read-only. The estimator adapter is
//! behind a mutex unless it declares itself reentrant.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Query, Request, State};
use axum::http::header::CONTENT_TYPE;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::model::{predict_topk, Checkpoint, ModelError};
use crate::skeletal::{extract_landmarks, from_structured_str, from_tabular_str, EstimatorAdapter, PoseSequence, SkeletalError};

pub const DEFAULT_PORT: u16 = 8000;
pub const DEFAULT_MAX_BODY_BYTES: usize = 50 * 1024 * 1024;
pub const DEFAULT_MAX_VIDEO_SECS: f64 = 15.0;
pub const DEFAULT_K: usize = 5;
pub const CKPT_ENV: &str = "SPOTERKIT_CKPT";
pub const PORT_ENV: &str = "SPOTERKIT_PORT";

/// Local development origins allowed by default.
pub const DEFAULT_ORIGINS: [&str; 4] = [
    "http://localhost:5173",
    "http://127.0.0.1:5173",
    "http://localhost:3000",
    "http://127.0.0.1:3000",
];

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body_bytes: usize,
    pub max_video_secs: f64,
    pub allowed_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            max_video_secs: DEFAULT_MAX_VIDEO_SECS,
            allowed_origins: DEFAULT_ORIGINS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

type SharedEstimator = Arc<Mutex<Box<dyn EstimatorAdapter>>>;

#[derive(Clone)]
pub struct AppState {
    checkpoint: Arc<Checkpoint>,
    model_id: Arc<str>,
    estimator: Option<SharedEstimator>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    pub fn new(checkpoint: Checkpoint, estimator: Option<Box<dyn EstimatorAdapter>>, config: ServiceConfig) -> Self {
        let model_id = checkpoint.model_id();
        Self {
            checkpoint: Arc::new(checkpoint),
            model_id: model_id.into(),
            estimator: estimator.map(|e| Arc::new(Mutex::new(e))),
            config: Arc::new(config),
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub gloss: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub extract_ms: f64,
    pub infer_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<PredictionEntry>,
    pub model_id: String,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field: Option<String>,
}

/// An error response with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: message.into(),
                field: None,
            },
        }
    }

    fn field(status: StatusCode, field: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: message.into(),
                field: Some(field.to_string()),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let origins: Vec<HeaderValue> = state
        .config
        .allowed_origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                log::warn!("ignoring invalid origin {o:?}");
                None
            }
        })
        .collect();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let limit = state.config.max_body_bytes;
    Router::new()
        .route("/api/health", get(health))
        .route("/api/classes", get(classes))
        .route("/api/predict", post(predict))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> impl IntoResponse {
    Json(serde_json::json!({"status": "ok", "model_id": &*state.model_id}))
}

async fn classes(State(state): State<AppState>) -> impl IntoResponse {
    Json(serde_json::json!({"classes": state.checkpoint.vocabulary.glosses()}))
}

#[derive(Debug, Deserialize)]
struct PredictQuery {
    k: Option<String>,
}

fn parse_k(raw: Option<&str>, num_classes: usize) -> Result<usize, ApiError> {
    let k = match raw {
        None => DEFAULT_K.min(num_classes),
        Some(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| ApiError::field(StatusCode::BAD_REQUEST, "k", format!("k must be a positive integer, got {s:?}")))?,
    };
    if k == 0 || k > num_classes {
        return Err(ApiError::field(
            StatusCode::BAD_REQUEST,
            "k",
            format!("k must be in 1..={num_classes}, got {k}"),
        ));
    }
    Ok(k)
}

fn too_long(seq: &PoseSequence, max_secs: f64) -> Option<ApiError> {
    (seq.duration_secs() > max_secs).then(|| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("clip is {:.1} s long; the limit is {max_secs} s", seq.duration_secs()),
        )
    })
}

fn no_detections() -> ApiError {
    ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        "no person detected: every frame has zero detected landmarks",
    )
}

async fn predict(
    State(state): State<AppState>,
    Query(query): Query<PredictQuery>,
    req: Request,
) -> Result<Json<PredictResponse>, ApiError> {
    let k = parse_k(query.k.as_deref(), state.checkpoint.config().num_classes)?;
    if let Some(len) = req
        .headers()
        .get(axum::http::header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok())
    {
        if len > state.config.max_body_bytes {
            return Err(payload_too_large(state.config.max_body_bytes));
        }
    }
    let content_type = req
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();

    let started = Instant::now();
    let seq = if content_type.starts_with("multipart/form-data") {
        let multipart = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
        sequence_from_video(&state, multipart).await?
    } else if content_type.contains("json") || content_type.starts_with("text/csv") {
        let bytes = axum::body::to_bytes(req.into_body(), state.config.max_body_bytes)
            .await
            .map_err(|_| payload_too_large(state.config.max_body_bytes))?;
        sequence_from_document(&state, &bytes, content_type.starts_with("text/csv"))?
    } else {
        return Err(ApiError::field(
            StatusCode::BAD_REQUEST,
            "content-type",
            format!(
                "expected multipart/form-data with a `video` part or an application/json landmark document, got {:?}",
                content_type
            ),
        ));
    };
    let extract_ms = started.elapsed().as_secs_f64() * 1e3;

    let started = Instant::now();
    let checkpoint = state.checkpoint.clone();
    let prediction = tokio::task::spawn_blocking(move || predict_topk(&checkpoint.prepare(&seq), &checkpoint, k))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(model_error)?;
    let infer_ms = started.elapsed().as_secs_f64() * 1e3;

    Ok(Json(PredictResponse {
        predictions: prediction
            .ranked
            .into_iter()
            .map(|r| PredictionEntry {
                gloss: r.gloss,
                probability: r.probability,
            })
            .collect(),
        model_id: state.model_id.to_string(),
        timing: Timing { extract_ms, infer_ms },
    }))
}

fn payload_too_large(limit: usize) -> ApiError {
    ApiError::new(
        StatusCode::PAYLOAD_TOO_LARGE,
        format!("request body exceeds the {limit}-byte limit"),
    )
}

fn model_error(e: ModelError) -> ApiError {
    match e {
        ModelError::DimensionMismatch { .. } | ModelError::EmptySequence => {
            ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
        }
        ModelError::InvalidK { .. } => ApiError::field(StatusCode::BAD_REQUEST, "k", e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    }
}

fn sequence_from_document(state: &AppState, bytes: &[u8], tabular: bool) -> Result<PoseSequence, ApiError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| ApiError::field(StatusCode::BAD_REQUEST, "body", "landmark document is not UTF-8"))?;
    let seq = if tabular {
        from_tabular_str(text)
    } else {
        from_structured_str(text)
    }
    .map_err(|e| ApiError::field(StatusCode::BAD_REQUEST, document_field(&e), format!("landmark document: {e}")))?;
    if let Some(err) = too_long(&seq, state.config.max_video_secs) {
        return Err(err);
    }
    if !seq.frames().iter().any(|f| f.any_present()) {
        return Err(no_detections());
    }
    Ok(seq)
}

/// Best-effort name of the offending document field.
fn document_field(e: &SkeletalError) -> &'static str {
    let msg = e.to_string();
    ["frames", "xy", "present", "fps", "schema_version", "source_id", "label"]
        .into_iter()
        .find(|f| msg.contains(f))
        .unwrap_or("body")
}

async fn sequence_from_video(state: &AppState, mut multipart: Multipart) -> Result<PoseSequence, ApiError> {
    let mut video: Option<(Option<String>, axum::body::Bytes)> = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| {
        let status = e.status();
        ApiError::new(
            if status == StatusCode::PAYLOAD_TOO_LARGE { status } else { StatusCode::BAD_REQUEST },
            e.body_text(),
        )
    })? {
        if field.name() != Some("video") {
            continue;
        }
        if video.is_some() {
            return Err(ApiError::field(StatusCode::BAD_REQUEST, "video", "more than one `video` part"));
        }
        let name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| {
            let status = e.status();
            ApiError::new(
                if status == StatusCode::PAYLOAD_TOO_LARGE { status } else { StatusCode::BAD_REQUEST },
                e.body_text(),
            )
        })?;
        video = Some((name, bytes));
    }
    let (name, bytes) =
        video.ok_or_else(|| ApiError::field(StatusCode::BAD_REQUEST, "video", "multipart body has no `video` part"))?;
    if bytes.is_empty() {
        return Err(ApiError::field(StatusCode::BAD_REQUEST, "video", "no frames decoded: the video is empty"));
    }
    let estimator = state.estimator.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "pose estimator unavailable on this server; send a landmark document instead",
        )
    })?;
    let suffix = name
        .as_deref()
        .and_then(|n| Path::new(n).extension())
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_else(|| ".mp4".into());
    let max_secs = state.config.max_video_secs;
    let seq = tokio::task::spawn_blocking(move || -> Result<PoseSequence, ApiError> {
        let mut file = tempfile::Builder::new()
            .prefix("upload-")
            .suffix(&suffix)
            .tempfile()
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        std::io::Write::write_all(&mut file, &bytes)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        let mut adapter = estimator.lock().unwrap_or_else(|p| p.into_inner());
        extract_landmarks(file.path(), adapter.as_mut()).map_err(|e| match e {
            SkeletalError::EstimatorUnavailable(m) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, m),
            SkeletalError::VideoDecode(m) => ApiError::field(StatusCode::BAD_REQUEST, "video", m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    if let Some(err) = too_long(&seq, max_secs) {
        return Err(err);
    }
    if !seq.frames().iter().any(|f| f.any_present()) {
        return Err(no_detections());
    }
    Ok(seq)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
