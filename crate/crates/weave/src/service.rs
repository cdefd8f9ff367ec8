//! JSON-over-HTTP surface of an [`Engine`].
//!
//! | route | body | answer |
//! |---|---|---|
//! | `POST /particles` | [`IngestRequest`] | 201, stored particle |
//! | `GET /particles/{id}` | | particle |
//! | `DELETE /particles/{id}?cascade=` | | deletion report |
//! | `POST /strands` | [`StrandRequest`] | 201, strand |
//! | `POST /query` | query spec | recall result |
//! | `POST /refine` | | refinement report |
//! | `GET /aggregates` | | every IA particle |
//! | `GET /stats` | | engine stats |
//! | `GET /audit` | | list of integrity violations |
//!
//! Errors are `{"error": "..."}` with 400 (validation), 401 (bad token), 404,
//! 409 (conflict), 502 (oracle failure) or 503 plus `Retry-After` when the
//! writer could not be acquired in time.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use weave_core::query::QuerySpec;
use weave_core::weave::{Cascade, ScanFilter};
use weave_core::{Millis, ParticleId, ParticleKind, SituationalImprint, StrandEvidence, StrandType};

use crate::engine::Engine;
use crate::error::{Error, ErrorClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub raw: String,
    #[serde(default)]
    pub imprint: Option<SituationalImprint>,
    #[serde(default)]
    pub t_event_start: Option<Millis>,
    #[serde(default)]
    pub t_event_end: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrandRequest {
    pub src: ParticleId,
    pub dst: ParticleId,
    #[serde(rename = "type")]
    pub strand_type: StrandType,
    #[serde(default)]
    pub evidence: StrandEvidence,
}

#[derive(Debug, Deserialize)]
pub struct DeleteParams {
    #[serde(default)]
    pub cascade: Option<Cascade>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

pub fn status_for(class: ErrorClass) -> StatusCode {
    match class {
        ErrorClass::Validation => StatusCode::BAD_REQUEST,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Oracle => StatusCode::BAD_GATEWAY,
        ErrorClass::Busy => StatusCode::SERVICE_UNAVAILABLE,
        ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self { status: status_for(e.class()), message: e.to_string() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(ErrorBody { error: self.message })).into_response();
        if self.status == StatusCode::SERVICE_UNAVAILABLE {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    token: Option<Arc<str>>,
}

impl AppState {
    fn authorize(&self, headers: &HeaderMap) -> ApiResult<()> {
        let Some(token) = &self.token else { return Ok(()) };
        let given = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given.and_then(|v| v.strip_prefix("Bearer ")) == Some(&**token) {
            Ok(())
        } else {
            Err(ApiError { status: StatusCode::UNAUTHORIZED, message: "missing or wrong bearer token".into() })
        }
    }

    /// Engine calls can block (oracle, writer lock), so they run off the async workers.
    async fn run<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Engine) -> crate::Result<T> + Send + 'static,
    ) -> ApiResult<T> {
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || f(&engine))
            .await
            .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() })?
            .map_err(ApiError::from)
    }
}

fn parse_id(raw: &str) -> ApiResult<ParticleId> {
    raw.parse().map_err(|_| ApiError::bad_request(format!("malformed particle id {raw:?}")))
}

async fn ingest(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<IngestRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    let Json(req) = body?;
    let p = app
        .run(move |e| {
            let imprint = req.imprint.unwrap_or_else(|| SituationalImprint::from_source("api"));
            let id = e.ingest_event(&req.raw, imprint, req.t_event_start, req.t_event_end)?;
            e.get(id)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn get_particle(State(app): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    let id = parse_id(&id)?;
    Ok(Json(app.run(move |e| e.get(id)).await?))
}

async fn delete_particle(
    State(app): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    params: Result<Query<DeleteParams>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    let id = parse_id(&id)?;
    let cascade = params?.0.cascade.unwrap_or(Cascade::StrandsAndFlagIas);
    Ok(Json(app.run(move |e| e.delete(id, cascade)).await?))
}

async fn add_strand(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<StrandRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    let Json(r) = body?;
    let s = app.run(move |e| e.add_strand(r.src, r.dst, r.strand_type, r.evidence)).await?;
    Ok((StatusCode::CREATED, Json(s)))
}

async fn query(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<QuerySpec>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    let Json(spec) = body?;
    Ok(Json(app.run(move |e| e.query(&spec)).await?))
}

async fn refine(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    Ok(Json(app.run(|e| e.refine()).await?))
}

async fn aggregates(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    Ok(Json(app.run(|e| Ok(e.scan(&ScanFilter::kind(ParticleKind::IA)))).await?))
}

async fn stats(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    Ok(Json(app.run(|e| Ok(e.stats())).await?))
}

async fn audit(State(app): State<AppState>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    app.authorize(&headers)?;
    Ok(Json(app.run(|e| Ok(e.audit())).await?))
}

pub fn router(engine: Arc<Engine>, token: Option<String>) -> Router {
    let state = AppState { engine, token: token.map(Arc::from) };
    Router::new()
        .route("/particles", post(ingest))
        .route("/particles/{id}", get(get_particle).delete(delete_particle))
        .route("/strands", post(add_strand))
        .route("/query", post(query))
        .route("/refine", post(refine))
        .route("/aggregates", get(aggregates))
        .route("/stats", get(stats))
        .route("/audit", get(audit))
        .with_state(state)
}

/// Periodically runs a refinement cycle whenever a trigger fires.
pub fn spawn_scheduler(engine: Arc<Engine>, every: std::time::Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            let e = engine.clone();
            match tokio::task::spawn_blocking(move || e.maybe_refine()).await {
                Ok(Ok(Some((reason, report)))) => {
                    tracing::info!(reason, ias = report.ias_created.len(), pruned = report.particles_pruned.len(), "refined")
                }
                Ok(Ok(None)) => {}
                Ok(Err(e)) => tracing::warn!(error = %e, "scheduled refinement failed"),
                Err(e) => tracing::warn!(error = %e, "scheduler task panicked"),
            }
        }
    })
}

/// Serves `engine` on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, engine: Arc<Engine>, token: Option<String>) -> std::io::Result<()> {
    axum::serve(listener, router(engine, token)).await
}
