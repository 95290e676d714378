use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query as UrlQuery, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cbr_core::formative::{find_levers, Lever};
use cbr_core::schema::SchemaDocument;
use cbr_core::{
    generate_feedback, leave_one_out, predict_final_grade, start_session, CaseBase, Edits, FeedbackConfig, Format,
    GradeDistribution, Operation, Query, RetainOutcome, RetrievalResult, Session, SessionState, Value,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::state::{AppState, SharedSlot};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/schemas", get(list_schemas))
        .route("/schemas/{id}", get(get_schema))
        .route("/casebases", get(list_case_bases).post(create_case_base))
        .route("/casebases/{id}/cases", get(list_cases))
        .route("/casebases/{id}/cases/{case_id}", get(get_case))
        .route("/casebases/{id}/predict", post(predict))
        .route("/casebases/{id}/evaluate", post(evaluate))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/query", post(submit_query))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/revise", post(revise))
        .route("/sessions/{id}/retain", post(retain))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let Some(token) = state.bearer_token.as_deref() else {
        return next.run(request).await;
    };
    if request.uri().path() == "/health" {
        return next.run(request).await;
    }
    let presented = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token) {
        next.run(request).await
    } else {
        ApiError::new(ErrorCode::Unauthorized, "missing or invalid bearer token").into_response()
    }
}

fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_schemas(State(state): State<Arc<AppState>>) -> Json<Vec<SchemaDocument>> {
    Json(state.store.schemas().iter().map(|s| s.to_document()).collect())
}

async fn get_schema(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SchemaDocument>> {
    Ok(Json(state.store.schema(&id)?.to_document()))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CaseBaseSummary {
    id: String,
    schema_id: Option<String>,
    size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn summary(state: &AppState, id: &str) -> CaseBaseSummary {
    match state.store.snapshot(id) {
        Ok(cb) => CaseBaseSummary {
            id: id.to_string(),
            schema_id: Some(cb.schema_id().to_string()),
            size: Some(cb.len()),
            error: None,
        },
        Err(e) => CaseBaseSummary {
            id: id.to_string(),
            schema_id: None,
            size: None,
            error: Some(e.to_string()),
        },
    }
}

async fn list_case_bases(State(state): State<Arc<AppState>>) -> Json<Vec<CaseBaseSummary>> {
    Json(
        state
            .store
            .case_base_ids()
            .iter()
            .map(|id| summary(&state, id))
            .collect(),
    )
}

#[derive(Deserialize)]
struct CreateParams {
    id: String,
    schema: Option<String>,
}

/// Uploads are CSV (`text/csv`) or JSON case-base documents; both are stored as JSON.
async fn create_case_base(
    State(state): State<Arc<AppState>>,
    UrlQuery(params): UrlQuery<CreateParams>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<CaseBaseSummary>)> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/json");
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let case_base = if content_type.starts_with("text/csv") {
        let schema = state.store.schema(params.schema.as_deref().unwrap_or("student"))?;
        CaseBase::from_csv(text, schema)?
    } else if content_type.starts_with("application/json") {
        let schema_id = cbr_core::case_base::peek_schema_id(text)?;
        if let Some(expected) = &params.schema {
            if expected != &schema_id {
                return Err(cbr_core::Error::SchemaMismatch {
                    expected: expected.clone(),
                    found: schema_id,
                }
                .into());
            }
        }
        CaseBase::from_json(text, state.store.schema(&schema_id)?)?
    } else {
        return Err(ApiError::bad_request(format!(
            "unsupported content type `{content_type}`"
        )));
    };
    state.store.create(&params.id, case_base, Format::Json)?;
    Ok((StatusCode::CREATED, Json(summary(&state, &params.id))))
}

async fn list_cases(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let cb = state.store.snapshot(&id)?;
    Ok(Json(cb.list_cases()).into_response())
}

async fn get_case(
    State(state): State<Arc<AppState>>,
    Path((id, case_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let cb = state.store.snapshot(&id)?;
    Ok(Json(cb.get_case(&case_id)?).into_response())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ValuesRequest {
    #[serde(default)]
    values: BTreeMap<String, Value>,
    k: Option<usize>,
}

#[derive(Serialize)]
struct PredictResponse {
    distribution: GradeDistribution,
    levers: Vec<Lever>,
    feedback: String,
}

async fn predict(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<PredictResponse>> {
    let req: ValuesRequest = parse_body(&body)?;
    let cb = state.store.snapshot(&id)?;
    let query = Query::parse(cb.schema(), req.values)?;
    let distribution = predict_final_grade(&cb, &query, req.k.unwrap_or(state.default_k))?;
    let config = FeedbackConfig::default();
    let levers = find_levers(cb.schema(), &distribution, &query, &config);
    let feedback = generate_feedback(cb.schema(), &distribution, &query, &config);
    Ok(Json(PredictResponse {
        distribution,
        levers,
        feedback,
    }))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    k: Option<usize>,
}

async fn evaluate(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: EvaluateRequest = parse_body(&body)?;
    let cb = state.store.snapshot(&id)?;
    let k = req.k.unwrap_or(state.default_k);
    let report = tokio::task::spawn_blocking(move || leave_one_out(&cb, k))
        .await
        .map_err(|e| ApiError::new(ErrorCode::IoError, e.to_string()))??;
    Ok(Json(report).into_response())
}

/// Wire view of a session.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    id: String,
    case_base_id: String,
    state: SessionState,
    k: Option<usize>,
    query: Option<BTreeMap<String, Value>>,
    results: Option<Vec<RetrievalResult>>,
    working_case: Option<cbr_core::Case>,
    retained_id: Option<String>,
    retain_outcome: Option<RetainOutcome>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id().to_string(),
            case_base_id: s.case_base_id().to_string(),
            state: s.state(),
            k: s.k(),
            query: s.query().map(|q| q.values().clone()),
            results: s.results().map(<[_]>::to_vec),
            working_case: s.working_case().cloned(),
            retained_id: s.retained_id().map(str::to_string),
            retain_outcome: s.retain_outcome(),
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct CreateSessionRequest {
    case_base_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionView>)> {
    let req: CreateSessionRequest = parse_body(&body)?;
    let session = start_session(state.store.clone(), &req.case_base_id)?;
    let view = SessionView::from(&session);
    state.insert_session(session);
    Ok((StatusCode::CREATED, Json(view)))
}

/// Runs `op` on the session while holding its lock, then returns the session view.
async fn with_session(
    slot: SharedSlot,
    op: impl FnOnce(&mut Session) -> cbr_core::Result<()>,
) -> ApiResult<Json<SessionView>> {
    let mut guard = slot.lock().await;
    guard.last_used = Instant::now();
    op(&mut guard.session)?;
    Ok(Json(SessionView::from(&guard.session)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    with_session(state.session(&id)?, |_| Ok(())).await
}

async fn submit_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: ValuesRequest = parse_body(&body)?;
    let k = req.k.unwrap_or(state.default_k);
    with_session(state.session(&id)?, |s| {
        s.guard(Operation::Query)?;
        let query = Query::parse(s.snapshot().schema(), req.values)?;
        s.submit_query(query, k).map(|_| ())
    })
    .await
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct ChooseRequest {
    case_id: String,
}

async fn choose(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: ChooseRequest = parse_body(&body)?;
    with_session(state.session(&id)?, |s| s.choose_case(&req.case_id).map(|_| ())).await
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ReviseRequest {
    #[serde(default)]
    edits: Edits,
}

async fn revise(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: ReviseRequest = parse_body(&body)?;
    with_session(state.session(&id)?, |s| s.revise(req.edits).map(|_| ())).await
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct RetainRequest {
    new_id: String,
}

async fn retain(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionView>> {
    let req: RetainRequest = parse_body(&body)?;
    with_session(state.session(&id)?, |s| s.retain(&req.new_id).map(|_| ())).await
}

async fn close_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let view = with_session(state.session(&id)?, Session::close).await?;
    state.remove_session(&id);
    Ok(view)
}
