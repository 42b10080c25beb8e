//! HTTP+JSON API over the store.
//!
//! Revisions travel in `ETag` (responses) and `If-Match` (requests). Errors are
//! JSON bodies `{code, message, details}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use cceval_core::agreement::Level;
use cceval_core::auto_metrics::{score_note, scoring_jobs, MetricReport, ReferenceIndex, ReferenceKind};
use cceval_core::model::{NoteKind, Phase};
use cceval_core::report::{human_report, AgreementReport, HumanReport, ReportMeta};
use cceval_core::session::JudgementBatch;
use cceval_core::stats::{correlate_report, CorrelationReport};
use cceval_core::study::Study;
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::export::export_session_csv;
use crate::store::{Record, Store, StoreError};

pub struct AppState {
    pub store: Store,
    pub token: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "details": self.details});
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let message = e.to_string();
        match e {
            StoreError::NotFound { kind, id } => ApiError {
                details: json!({"kind": kind, "id": id}),
                ..ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
            },
            StoreError::RevisionConflict { expected, current, .. } => ApiError {
                details: json!({"expected": expected, "current": current}),
                ..ApiError::new(StatusCode::CONFLICT, "revision_conflict", message)
            },
            StoreError::Validation(v) => ApiError {
                details: serde_json::to_value(format!("{v:?}")).unwrap_or(Value::Null),
                ..ApiError::unprocessable("validation_error", message)
            },
            StoreError::Invalid { .. } => ApiError::unprocessable("validation_error", message),
            StoreError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_record", message)
            }
            StoreError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn if_match(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(v) = headers.get(header::IF_MATCH) else {
        return Ok(None);
    };
    let s = v.to_str().map_err(|_| ApiError::bad_request("If-Match is not ASCII"))?;
    let s = s.trim().trim_start_matches("W/").trim_matches('"');
    s.parse()
        .map(Some)
        .map_err(|_| ApiError::bad_request(format!("If-Match must be a revision number, got `{s}`")))
}

#[derive(Serialize)]
struct RecordBody<T> {
    id: String,
    revision: u64,
    updated_at: chrono::DateTime<Utc>,
    payload: T,
}

fn record_response<T, D: Serialize>(status: StatusCode, rec: Record<T>, doc: impl Fn(&T) -> D) -> Response {
    let etag = HeaderValue::from_str(&format!("\"{}\"", rec.revision)).expect("digits are valid");
    let body = RecordBody {
        id: rec.id.clone(),
        revision: rec.revision,
        updated_at: rec.updated_at,
        payload: doc(&rec.payload),
    };
    (status, [(header::ETAG, etag)], Json(body)).into_response()
}

fn created_or_ok(revision: u64) -> StatusCode {
    if revision == 1 {
        StatusCode::CREATED
    } else {
        StatusCode::OK
    }
}

async fn put_checklist(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let expected = if_match(&headers)?.unwrap_or(0);
    let rec = state.store.put_checklist(&id, parse_body(&body)?, expected, Utc::now())?;
    Ok(record_response(created_or_ok(rec.revision), rec, |c| c.to_doc()))
}

async fn get_checklist(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(record_response(StatusCode::OK, state.store.get_checklist(&id)?, |c| c.to_doc()))
}

async fn put_note(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let expected = if_match(&headers)?.unwrap_or(0);
    let rec = state.store.put_note(&id, parse_body(&body)?, expected, Utc::now())?;
    Ok(record_response(created_or_ok(rec.revision), rec, |n| n.to_doc()))
}

async fn get_note(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(record_response(StatusCode::OK, state.store.get_note(&id)?, |n| n.to_doc()))
}

#[derive(Deserialize)]
struct CreateSession {
    #[serde(default)]
    session_id: Option<String>,
    checklist_id: String,
    note_id: String,
    annotator_id: String,
}

/// Without an explicit id the session is `{note_id}.{annotator_id}`.
async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    let id = req
        .session_id
        .unwrap_or_else(|| format!("{}.{}", req.note_id, req.annotator_id));
    let rec = state
        .store
        .create_session(&id, &req.annotator_id, &req.checklist_id, &req.note_id, Utc::now())?;
    Ok(record_response(StatusCode::CREATED, rec, |s| s.to_doc()))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(record_response(StatusCode::OK, state.store.get_session(&id)?, |s| s.to_doc()))
}

async fn post_judgements(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let batch: JudgementBatch = parse_body(&body)?;
    let rec = state
        .store
        .update_session(&id, if_match(&headers)?, Utc::now(), |s, cl, note| {
            s.apply_judgements(&batch, cl, note)
        })?;
    Ok(record_response(StatusCode::OK, rec, |s| s.to_doc()))
}

#[derive(Deserialize)]
struct PhaseRequest {
    target: Phase,
}

async fn post_phase(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let req: PhaseRequest = parse_body(&body)?;
    let at = Utc::now();
    let rec = state
        .store
        .update_session(&id, if_match(&headers)?, at, |s, cl, note| s.advance(req.target, at, cl, note))?;
    Ok(record_response(StatusCode::OK, rec, |s| s.to_doc()))
}

async fn export_csv(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.store.get_session(&id)?;
    let checklist = state.store.get_checklist(session.payload.checklist_id())?.payload;
    let note = state.store.get_note(session.payload.note_id())?.payload;
    let bytes = export_session_csv(&session.payload, &checklist, &note)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "export_failed", e.to_string()))?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("text/csv; charset=utf-8"))],
        bytes,
    )
        .into_response())
}

fn meta(store: &Store) -> ReportMeta {
    ReportMeta::new(&store.split_config().version)
}

/// Every checklist, note and session currently in the store.
pub fn load_study(store: &Store) -> Result<Study, ApiError> {
    let notes = store.notes()?;
    Study::new(store.checklists()?, notes, store.sessions()?)
        .map_err(|e| ApiError::unprocessable("study_invalid", e.to_string()))
}

pub fn build_human_report(store: &Store) -> ApiResult<HumanReport> {
    Ok(human_report(&load_study(store)?, meta(store)))
}

async fn report_human(State(state): State<Arc<AppState>>) -> ApiResult<Json<HumanReport>> {
    Ok(Json(build_human_report(&state.store)?))
}

#[derive(Deserialize)]
struct AgreementQuery {
    level: Option<String>,
}

/// With `level`, only columns measured at that level are kept: nominal gives
/// present/absent and correct/incorrect, ordinal gives importance, interval
/// gives the error-count columns.
async fn report_agreement(
    State(state): State<Arc<AppState>>,
    Query(q): Query<AgreementQuery>,
) -> ApiResult<Response> {
    let level = match q.level.as_deref() {
        None => None,
        Some(s) => Some(Level::parse(s).ok_or_else(|| {
            ApiError::bad_request(format!("level must be nominal, ordinal or interval, got `{s}`"))
        })?),
    };
    let study = load_study(&state.store)?;
    let mut report = AgreementReport::from_study(&study, meta(&state.store))
        .map_err(|e| ApiError::unprocessable("agreement_failed", e.to_string()))?;
    if let Some(level) = level {
        report.columns.retain(|c| c.level == level);
        report.counts.retain(|c| c.level == level);
    }
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct CorrelationQuery {
    #[serde(rename = "ref")]
    reference: Option<String>,
}

#[derive(Serialize)]
pub struct CorrelationBody {
    pub meta: ReportMeta,
    pub metrics: MetricReport,
    pub correlation: CorrelationReport,
}

/// Scores every evaluated generated note against the requested references
/// (no BERTScore: the service holds no embeddings) and correlates with the
/// per-note human scores.
pub fn build_correlation(store: &Store, kinds: &[ReferenceKind]) -> ApiResult<CorrelationBody> {
    let study = load_study(store)?;
    let human = human_report(&study, meta(store));
    let human_notes: Vec<_> = study
        .notes()
        .values()
        .filter(|n| n.kind() == NoteKind::Human)
        .collect();
    let generated: Vec<_> = study
        .notes()
        .values()
        .filter(|n| n.kind() == NoteKind::Generated && human.note_human_scores.contains_key(n.note_id()))
        .collect();
    let scoring = |e: cceval_core::auto_metrics::ScoreError| ApiError::unprocessable("scoring_failed", e.to_string());
    let index = ReferenceIndex::new(study.checklists().values(), human_notes).map_err(scoring)?;
    let rows = scoring_jobs(&generated, &index, kinds)
        .map_err(scoring)?
        .iter()
        .map(|(note, reference)| score_note(note.note_id(), note.source_text(), reference, None, false))
        .collect::<Result<Vec<_>, _>>()
        .map_err(scoring)?;
    let metrics = MetricReport::new(rows);
    let correlation = correlate_report(&metrics, &human.note_human_scores)
        .map_err(|e| ApiError::unprocessable("correlation_failed", e.to_string()))?;
    Ok(CorrelationBody {
        meta: meta(store),
        metrics,
        correlation,
    })
}

pub fn parse_reference_kinds(s: &str) -> Option<Vec<ReferenceKind>> {
    match s {
        "both" => Some(vec![ReferenceKind::Human, ReferenceKind::Checklist]),
        other => ReferenceKind::parse(other).map(|k| vec![k]),
    }
}

async fn report_correlation(
    State(state): State<Arc<AppState>>,
    Query(q): Query<CorrelationQuery>,
) -> ApiResult<Json<CorrelationBody>> {
    let r = q.reference.as_deref().unwrap_or("both");
    let kinds = parse_reference_kinds(r)
        .ok_or_else(|| ApiError::bad_request(format!("ref must be human, checklist or both, got `{r}`")))?;
    Ok(Json(build_correlation(&state.store, &kinds)?))
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/checklists/{id}", put(put_checklist).get(get_checklist))
        .route("/notes/{id}", put(put_note).get(get_note))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/judgements", post(post_judgements))
        .route("/sessions/{id}/phase", post(post_phase))
        .route("/sessions/{id}/export.csv", get(export_csv))
        .route("/reports/human", get(report_human))
        .route("/reports/agreement", get(report_agreement))
        .route("/reports/correlation", get(report_correlation))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}
