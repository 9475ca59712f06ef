//! Read-only JSON API over loaded artifacts.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use embtree_core::explanation::{AdhocInput, Explainer, ExplanationMeta};
use embtree_core::ingestion::SplitTag;
use embtree_core::prototypes::FilterSpec;
use embtree_core::Error;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Clone)]
pub struct AppState {
    explainer: Arc<Explainer>,
}

impl AppState {
    pub fn new(explainer: Explainer) -> Self {
        Self {
            explainer: Arc::new(explainer),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
}

pub struct HttpError(StatusCode, String);

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.0, Json(ApiError { error: self.1 })).into_response()
    }
}

impl From<Error> for HttpError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::MissingResource(_) | Error::Config(_) | Error::Value { .. } => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        HttpError(status, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> HttpError {
    HttpError(StatusCode::BAD_REQUEST, msg.into())
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Filters {
    pub pos: BTreeSet<String>,
    pub ner: BTreeSet<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetaResponse {
    #[serde(flatten)]
    pub explanation: ExplanationMeta,
    pub m: usize,
    pub top_k: usize,
    pub documents: DocumentCounts,
    pub filters: Filters,
}

async fn healthz() -> &'static str {
    "ok"
}

async fn meta(State(s): State<AppState>) -> Json<MetaResponse> {
    let e = &s.explainer;
    let (pos, ner) = e.available_filters();
    Json(MetaResponse {
        explanation: e.metadata(),
        m: e.reducer.m(),
        top_k: e.prototypes.top_k,
        documents: DocumentCounts {
            train: e.documents(SplitTag::Train).len(),
            test: e.documents(SplitTag::Test).len(),
        },
        filters: Filters { pos, ner },
    })
}

#[derive(Debug, Deserialize)]
pub struct TreeQuery {
    pub filter: Option<String>,
    pub topk: Option<String>,
}

fn parse_filter(f: Option<&str>) -> Result<FilterSpec, HttpError> {
    f.map(str::parse)
        .transpose()
        .map(Option::unwrap_or_default)
        .map_err(|e: Error| bad_request(e.to_string()))
}

fn parse_usize(name: &str, v: Option<&str>) -> Result<Option<usize>, HttpError> {
    v.map(|s| {
        s.parse::<usize>()
            .map_err(|_| bad_request(format!("{name} must be a non-negative integer")))
    })
    .transpose()
}

fn positive_top_k(top_k: Option<usize>) -> Result<Option<usize>, HttpError> {
    match top_k {
        Some(0) => Err(bad_request("topk must be positive")),
        k => Ok(k),
    }
}

async fn tree(
    State(s): State<AppState>,
    Query(q): Query<TreeQuery>,
) -> Result<Response, HttpError> {
    let filter = parse_filter(q.filter.as_deref())?;
    let top_k = positive_top_k(parse_usize("topk", q.topk.as_deref())?)?;
    let e = s.explainer.clone();
    let bytes =
        tokio::task::spawn_blocking(move || e.global(&filter, top_k).map(|g| g.to_json_bytes()))
            .await
            .map_err(|e| HttpError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(json_bytes(bytes))
}

#[derive(Debug, Deserialize)]
pub struct DocumentsQuery {
    pub split: Option<String>,
    pub page: Option<String>,
    pub page_size: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocumentRow {
    pub doc_id: String,
    pub text: String,
    pub split: SplitTag,
    pub true_label: u32,
    pub true_class: String,
    pub predicted_label: u32,
    pub predicted_class: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DocumentsPage {
    pub split: SplitTag,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
    pub documents: Vec<DocumentRow>,
}

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 1000;

async fn documents(
    State(s): State<AppState>,
    Query(q): Query<DocumentsQuery>,
) -> Result<Json<DocumentsPage>, HttpError> {
    let split: SplitTag = match q.split.as_deref() {
        None => SplitTag::Test,
        Some(v) => v
            .parse()
            .map_err(|_| bad_request(format!("unknown split {v:?}")))?,
    };
    let page = parse_usize("page", q.page.as_deref())?.unwrap_or(1);
    let page_size = parse_usize("page_size", q.page_size.as_deref())?.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 {
        return Err(bad_request("pages start at 1"));
    }
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(bad_request(format!(
            "page_size must be in 1..={MAX_PAGE_SIZE}"
        )));
    }
    let e = &s.explainer;
    let ids = e.documents(split);
    let total = ids.len();
    let total_pages = total.div_ceil(page_size);
    if page > total_pages.max(1) {
        return Err(HttpError(
            StatusCode::NOT_FOUND,
            format!("page {page} out of range; {total_pages} page(s)"),
        ));
    }
    let mut rows = Vec::new();
    for &i in ids.iter().skip((page - 1) * page_size).take(page_size) {
        let doc = &e.bundle.corpus.documents[i];
        let pred = e.predict_doc(i)?;
        rows.push(DocumentRow {
            doc_id: doc.doc_id.clone(),
            text: doc.text.clone(),
            split: doc.split,
            true_label: doc.label,
            true_class: e.class_name(doc.label),
            predicted_label: pred.class,
            predicted_class: e.class_name(pred.class),
        });
    }
    Ok(Json(DocumentsPage {
        split,
        page,
        page_size,
        total,
        total_pages,
        documents: rows,
    }))
}

/// Body of `POST /api/explain`: a corpus document, or ad-hoc text with a
/// caller-supplied embedding or feature row.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub doc_id: Option<String>,
    pub text: Option<String>,
    pub embedding: Option<Vec<f32>>,
    pub features: Option<Vec<f64>>,
    pub filter: Option<String>,
    pub topk: Option<usize>,
}

async fn explain(State(s): State<AppState>, body: Bytes) -> Result<Response, HttpError> {
    let req: ExplainRequest = serde_json::from_slice(&body)
        .map_err(|e| bad_request(format!("malformed request body: {e}")))?;
    let filter = parse_filter(req.filter.as_deref())?;
    positive_top_k(req.topk)?;
    let e = &s.explainer;
    let out = match (req.doc_id, req.text) {
        (Some(id), None) => e.local_doc(&id, &filter, req.topk)?,
        (None, Some(text)) => e.local_adhoc(
            &AdhocInput {
                text,
                embedding: req.embedding,
                features: req.features,
            },
            &filter,
            req.topk,
        )?,
        _ => return Err(bad_request("exactly one of doc_id or text is required")),
    };
    Ok(json_bytes(out.to_json_bytes()))
}

pub fn router(state: AppState, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/healthz", get(healthz))
        .route("/api/meta", get(meta))
        .route("/api/tree", get(tree))
        .route("/api/documents", get(documents))
        .route("/api/explain", post(explain))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    ui_dir: Option<&Path>,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
