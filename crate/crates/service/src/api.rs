use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use kbalign_core::corpus::{AliasTerm, Cui, Qid};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::services::{ServeDir, ServeFile};

use crate::error::Error;
use crate::log::DecisionLog;
use crate::queue::{
    export_alignments, CandidateDetail, Catalog, Decision, Entry, QueueState, Resolution, Status, Verdict,
};

const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_PAGE_SIZE: usize = 1000;

/// Shared service state. Reads take the state lock briefly; writes go
/// through the log mutex first so log order and apply order agree.
pub struct AppState {
    pub catalog: Catalog,
    pub queue: RwLock<QueueState>,
    pub log: Mutex<DecisionLog>,
    pub metrics: Option<Value>,
    pub static_dir: Option<PathBuf>,
}

pub type SharedState = Arc<AppState>;

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Validation(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Serialize)]
struct Counts {
    pending: usize,
    done: usize,
}

fn counts(catalog: &Catalog, queue: &QueueState) -> Counts {
    let done = catalog
        .entries()
        .filter(|e| queue.status(&e.concept.cui) == Status::Done)
        .count();
    Counts {
        pending: catalog.len() - done,
        done,
    }
}

#[derive(Serialize)]
struct TopCandidate<'a> {
    qid: Qid,
    title: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct QueueSummary<'a> {
    cui: &'a Cui,
    aliases: &'a [AliasTerm],
    n_candidates: usize,
    top_candidate: Option<TopCandidate<'a>>,
    status: Status,
}

#[derive(Serialize)]
struct QueuePage<'a> {
    total: usize,
    page: usize,
    page_size: usize,
    counts: Counts,
    items: Vec<QueueSummary<'a>>,
}

#[derive(Serialize)]
struct QueueItem<'a> {
    cui: &'a Cui,
    aliases: &'a [AliasTerm],
    candidates: &'a [CandidateDetail],
    status: Status,
    resolution: Option<Resolution>,
    allowed_verdicts: Vec<Verdict>,
}

fn queue_item<'a>(entry: &'a Entry, queue: &QueueState) -> QueueItem<'a> {
    let cui = &entry.concept.cui;
    QueueItem {
        cui,
        aliases: &entry.concept.aliases,
        candidates: &entry.candidates,
        status: queue.status(cui),
        resolution: queue.resolution(cui),
        allowed_verdicts: entry.allowed_verdicts(),
    }
}

#[derive(Deserialize)]
struct QueueParams {
    status: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_queue(State(st): State<SharedState>, Query(p): Query<QueueParams>) -> Result<Response, ApiError> {
    let filter = match p.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<Status>()?),
    };
    let page_size = p.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            format!("page_size must be in 1..={MAX_PAGE_SIZE}"),
        ));
    }
    let page = p.page.unwrap_or(0);
    let queue = st.queue.read().unwrap();
    let matching: Vec<&Entry> = st
        .catalog
        .entries()
        .filter(|e| filter.is_none_or(|f| queue.status(&e.concept.cui) == f))
        .collect();
    let items = matching
        .iter()
        .skip(page.saturating_mul(page_size))
        .take(page_size)
        .map(|e| QueueSummary {
            cui: &e.concept.cui,
            aliases: &e.concept.aliases,
            n_candidates: e.candidates.len(),
            top_candidate: e.candidates.first().map(|c| TopCandidate {
                qid: c.qid,
                title: &c.title,
                score: c.score,
            }),
            status: queue.status(&e.concept.cui),
        })
        .collect();
    let body = QueuePage {
        total: matching.len(),
        page,
        page_size,
        counts: counts(&st.catalog, &queue),
        items,
    };
    Ok(Json(body).into_response())
}

async fn get_concept(State(st): State<SharedState>, Path(cui): Path<String>) -> Result<Response, ApiError> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, format!("unknown cui {cui}"));
    let parsed: Cui = cui.parse().map_err(|_| not_found())?;
    let entry = st.catalog.get(&parsed).ok_or_else(not_found)?;
    let queue = st.queue.read().unwrap();
    Ok(Json(queue_item(entry, &queue)).into_response())
}

/// Request body for a decision; the timestamp defaults to the time of receipt.
#[derive(Deserialize)]
struct DecisionBody {
    cui: String,
    #[serde(default)]
    qid: Option<String>,
    verdict: String,
    annotator: String,
    #[serde(default)]
    timestamp: Option<u64>,
}

fn parse_decision(body: &[u8]) -> Result<Decision, Error> {
    let b: DecisionBody =
        serde_json::from_slice(body).map_err(|e| Error::Validation(format!("malformed decision ({e})")))?;
    let cui: Cui = b
        .cui
        .parse()
        .map_err(|_| Error::Validation(format!("invalid cui {:?}", b.cui)))?;
    let qid = b
        .qid
        .map(|q| {
            q.parse::<Qid>()
                .map_err(|_| Error::Validation(format!("invalid qid {q:?}")))
        })
        .transpose()?;
    let timestamp = b
        .timestamp
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    Ok(Decision {
        cui,
        qid,
        verdict: b.verdict.parse()?,
        annotator: b.annotator,
        timestamp,
    })
}

/// Validates, appends and syncs, then applies. The response is sent only
/// after the line is on disk.
pub fn record_decision(st: &AppState, decision: &Decision) -> Result<(), Error> {
    st.catalog.validate(decision)?;
    let mut log = st.log.lock().unwrap();
    log.append(decision)?;
    st.queue.write().unwrap().apply(decision);
    Ok(())
}

async fn post_decision(State(st): State<SharedState>, body: Bytes) -> Result<Response, ApiError> {
    let decision = parse_decision(&body)?;
    let d = decision.clone();
    let st2 = st.clone();
    tokio::task::spawn_blocking(move || record_decision(&st2, &d))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let queue = st.queue.read().unwrap();
    let body = serde_json::json!({
        "decision": decision,
        "status": queue.status(&decision.cui),
        "counts": counts(&st.catalog, &queue),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn export(State(st): State<SharedState>) -> Result<Response, ApiError> {
    let records = {
        let queue = st.queue.read().unwrap();
        export_alignments(&st.catalog, &queue)
    };
    let mut out = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut out, r).map_err(Error::from)?;
        out.push(b'\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

async fn metrics(State(st): State<SharedState>) -> Result<Response, ApiError> {
    match &st.metrics {
        Some(m) => Ok(Json(m.clone()).into_response()),
        None => Err(ApiError(StatusCode::NOT_FOUND, "no metrics loaded".into())),
    }
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>kbalign curation</title></head>
<body>
<h1>kbalign curation service</h1>
<p>No web client is installed. Start the service with <code>--static-dir</code> pointing at a built client, or use the API:</p>
<ul>
<li><a href=\"/api/queue\">GET /api/queue</a></li>
<li>GET /api/concepts/{cui}</li>
<li>POST /api/decisions</li>
<li><a href=\"/api/export\">GET /api/export</a></li>
<li><a href=\"/api/metrics\">GET /api/metrics</a></li>
</ul>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

pub fn router(state: SharedState) -> Router {
    let api = Router::new()
        .route("/api/queue", get(list_queue))
        .route("/api/concepts/{cui}", get(get_concept))
        .route("/api/decisions", axum::routing::post(post_decision))
        .route("/api/export", get(export))
        .route("/api/metrics", get(metrics));
    let app = match &state.static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => api.route("/", get(placeholder)),
    };
    app.with_state(state)
}
