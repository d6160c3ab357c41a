//! HTTP+JSON API over a [`Store`], plus optional static hosting of the
//! annotation UI bundle.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::AnnevalError;
use crate::ledger::Store;
use crate::study::{create_study, GenerationRun, RatingSubmission, StudyConfig};
use crate::summary::DEFAULT_CAP;

impl IntoResponse for AnnevalError {
    fn into_response(self) -> Response {
        use AnnevalError::*;
        let (status, kind) = match &self {
            UnknownStudy(_) | UnknownItem(_) => (StatusCode::NOT_FOUND, "not_found"),
            UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
            OutOfScale { .. } | Invalid(_) | InsufficientItems { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            Duplicate { .. } | StudyExists(_) => (StatusCode::CONFLICT, "conflict"),
            UnderCovered(_) => (StatusCode::CONFLICT, "under_covered"),
            Ledger { .. } | Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        let mut body = json!({ "error": self.to_string(), "kind": kind });
        if let UnderCovered(items) = &self {
            body["items"] = json!(items);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, AnnevalError>;

#[derive(Debug, Deserialize)]
pub struct CreateStudyRequest {
    #[serde(default)]
    pub id: Option<String>,
    pub runs: Vec<GenerationRun>,
    pub n_items: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub min_annotators: Option<usize>,
    #[serde(default)]
    pub scale_min: Option<u8>,
    #[serde(default)]
    pub scale_max: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateStudyResponse {
    pub study_id: String,
    pub items: usize,
}

async fn create(State(store): State<Arc<Store>>, Json(req): Json<CreateStudyRequest>) -> ApiResult<impl IntoResponse> {
    let d = StudyConfig::default();
    let config = StudyConfig {
        n_items: req.n_items,
        min_annotators: req.min_annotators.unwrap_or(d.min_annotators),
        scale_min: req.scale_min.unwrap_or(d.scale_min),
        scale_max: req.scale_max.unwrap_or(d.scale_max),
        seed: req.seed.unwrap_or(d.seed),
    };
    let id = match req.id {
        Some(id) => id,
        None => {
            let taken = store.ids();
            (taken.len() + 1..).map(|n| format!("study-{n}")).find(|i| !taken.contains(i)).unwrap_or_default()
        }
    };
    let study = create_study(&id, &req.runs, config)?;
    let items = study.items.len();
    store.insert(study)?;
    Ok((StatusCode::CREATED, Json(CreateStudyResponse { study_id: id, items })))
}

async fn list(State(store): State<Arc<Store>>) -> Json<serde_json::Value> {
    Json(json!({ "studies": store.ids() }))
}

#[derive(Debug, Default, Deserialize)]
pub struct RegisterRequest {
    #[serde(default)]
    pub annotator: Option<String>,
}

async fn register(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Option<Json<RegisterRequest>>,
) -> ApiResult<impl IntoResponse> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let annotator = store.register(&id, req.annotator.as_deref())?;
    Ok((StatusCode::CREATED, Json(json!({ "annotator": annotator }))))
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

async fn next(State(store): State<Arc<Store>>, Path(id): Path<String>, Query(q): Query<NextQuery>) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.next_item(&id, &q.annotator)?))
}

async fn rate(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(sub): Json<RatingSubmission>,
) -> ApiResult<impl IntoResponse> {
    Ok((StatusCode::CREATED, Json(store.rate(&id, &sub)?)))
}

async fn agreement(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.agreement(&id)?))
}

#[derive(Debug, Deserialize)]
pub struct SummaryQuery {
    #[serde(default)]
    pub cap: Option<usize>,
    /// `text` for the aligned table.
    #[serde(default)]
    pub format: Option<String>,
}

async fn summary(State(store): State<Arc<Store>>, Path(id): Path<String>, Query(q): Query<SummaryQuery>) -> ApiResult<Response> {
    let s = store.summary(&id, q.cap.unwrap_or(DEFAULT_CAP))?;
    Ok(match q.format.as_deref() {
        Some("text") => s.table().into_response(),
        _ => Json(s).into_response(),
    })
}

pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/studies", post(create).get(list))
        .route("/studies/:id/annotators", post(register))
        .route("/studies/:id/next", get(next))
        .route("/studies/:id/ratings", post(rate))
        .route("/studies/:id/agreement", get(agreement))
        .route("/studies/:id/summary", get(summary))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(store: Arc<Store>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, static_dir)).await
}
