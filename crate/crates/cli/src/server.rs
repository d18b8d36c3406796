//! Annotation HTTP service: review queue, label intake and live agreement.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bginv_core::assessor::annotations::valid_label;
use bginv_core::assessor::{AnnotationRow, AnnotationSet, IrrReport, Label};
use bginv_core::pipeline::{artifact_stem, load_matrices};
use bginv_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub struct ServerConfig {
    /// Variance-matrix JSON files; they define the models under review.
    pub matrices: PathBuf,
    /// Rendered PNGs, served under `/files/`.
    pub renders: PathBuf,
    pub annotations: PathBuf,
    /// Built annotation UI, served under `/`.
    pub static_dir: Option<PathBuf>,
}

struct ModelEntry {
    positions: Vec<String>,
}

struct AppState {
    models: BTreeMap<String, ModelEntry>,
    renders: PathBuf,
    annotations_path: PathBuf,
    annotations: Mutex<AnnotationSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub model_id: String,
    pub matrix_urls: Vec<String>,
    pub scatter_url: Option<String>,
    pub current_label: Option<Label>,
}

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    pub annotator: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub model_id: String,
    pub annotator: String,
    pub label: Label,
}

#[derive(Debug, Serialize)]
struct IrrResponse {
    #[serde(flatten)]
    report: IrrReport,
    insufficient_overlap: bool,
}

const PLACEHOLDER: &str = "<!doctype html><title>bginv annotate</title>\
<p>Annotation API: <code>GET /api/queue?annotator=ID</code>, \
<code>POST /api/label</code>, <code>GET /api/irr</code>.</p>";

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "ok": false, "error": message.into() }))).into_response()
}

pub fn router(cfg: &ServerConfig) -> Result<Router> {
    let mut models: BTreeMap<String, ModelEntry> = BTreeMap::new();
    for m in load_matrices(&cfg.matrices)? {
        models
            .entry(m.model_id.clone())
            .or_insert(ModelEntry { positions: Vec::new() })
            .positions
            .push(m.position);
    }
    for e in models.values_mut() {
        e.positions.sort();
    }
    if models.is_empty() {
        return Err(Error::Data(format!("no matrices in {}", cfg.matrices.display())));
    }
    let state = Arc::new(AppState {
        models,
        renders: cfg.renders.clone(),
        annotations_path: cfg.annotations.clone(),
        annotations: Mutex::new(AnnotationSet::load(&cfg.annotations)?),
    });
    let app = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/label", post(label))
        .route("/api/irr", get(irr))
        .nest_service("/files", ServeDir::new(&cfg.renders));
    let app = match &cfg.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    Ok(app.with_state(state))
}

fn file_url(renders: &Path, name: String) -> Option<String> {
    renders.join(&name).exists().then(|| format!("/files/{name}"))
}

async fn queue(State(s): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> Response {
    if q.annotator.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "annotator is required");
    }
    let ann = s.annotations.lock().await;
    let mut items: Vec<QueueItem> = s
        .models
        .iter()
        .map(|(id, e)| {
            let stems: Vec<String> = e.positions.iter().map(|p| artifact_stem(id, p)).collect();
            QueueItem {
                model_id: id.clone(),
                matrix_urls: stems.iter().map(|st| format!("/files/{st}.png")).collect(),
                scatter_url: stems
                    .first()
                    .and_then(|st| file_url(&s.renders, format!("{st}_scatter.png"))),
                current_label: ann.get(id, &q.annotator).map(|r| r.label),
            }
        })
        .collect();
    items.sort_by_key(|i| i.current_label.is_some());
    Json(items).into_response()
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn append(path: &Path, row: &AnnotationRow) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(row).map_err(std::io::Error::other)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.flush()?;
    f.sync_data()
}

async fn label(State(s): State<Arc<AppState>>, Json(req): Json<LabelRequest>) -> Response {
    if !valid_label(req.label) {
        return error(StatusCode::BAD_REQUEST, format!("label {} is not one of 1, 2, 3", req.label));
    }
    if req.annotator.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "annotator is required");
    }
    if !s.models.contains_key(&req.model_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown model {}", req.model_id));
    }
    let row = AnnotationRow {
        model_id: req.model_id,
        annotator: req.annotator,
        label: req.label,
        ts: Some(now_ms()),
    };
    let mut ann = s.annotations.lock().await;
    if let Err(e) = append(&s.annotations_path, &row) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
    }
    let replaced = ann.insert(row).expect("label validated").is_some();
    Json(json!({ "ok": true, "replaced": replaced })).into_response()
}

async fn irr(State(s): State<Arc<AppState>>) -> Response {
    let report = s.annotations.lock().await.irr();
    let insufficient_overlap = !report.pairwise.iter().any(|p| p.kappa.is_some());
    Json(IrrResponse {
        report,
        insufficient_overlap,
    })
    .into_response()
}

/// Binds and serves until the process ends.
pub fn serve(cfg: &ServerConfig, bind: &str) -> Result<()> {
    let app = router(cfg)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Data(format!("runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Error::Data(format!("cannot bind {bind}: {e}")))?;
        log::info!("annotation server on http://{bind}");
        axum::serve(listener, app)
            .await
            .map_err(|e| Error::Data(format!("server: {e}")))
    })
}
