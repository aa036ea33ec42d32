//! JSON-over-HTTP routes.

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use langlie_core::Family;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::future::Future;
use std::sync::Arc;
use tokio::net::TcpListener;

use crate::error::ServiceError;
use crate::store::{ExportFormat, RecordRequest, SessionStore};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Validation(_) | ServiceError::UnknownFormat(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::StaleStimulus { .. } | ServiceError::Closed(_) | ServiceError::EmptyHistory(_) => {
                StatusCode::CONFLICT
            }
            ServiceError::InvalidRecord(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::CorruptLog { .. } | ServiceError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(self.body())).into_response()
    }
}

type Store = Arc<SessionStore>;
type ApiResult<T> = Result<T, ServiceError>;

#[derive(Debug, Deserialize)]
struct CreateRequest {
    a: f64,
    b: f64,
    #[serde(default = "default_family")]
    family: Family,
}

fn default_family() -> Family {
    Family::Probit
}

#[derive(Debug, Default, Deserialize)]
struct IndexGuard {
    #[serde(default)]
    expected_index: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

/// Parses a JSON body, reporting failures in the structured error format.
fn parse<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(format!("bad JSON body: {e}")))
}

/// Like [`parse`], but an empty body means `T::default()`.
fn parse_optional<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse(body)
    }
}

/// Runs a store call off the async workers; mutations wait on `fsync`.
async fn blocking<T, F>(store: Store, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .expect("store task panicked")
}

async fn create(State(store): State<Store>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateRequest = parse(&body)?;
    let view = blocking(store, move |s| s.create(req.a, req.b, req.family)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list(State(store): State<Store>) -> impl IntoResponse {
    Json(store.list())
}

async fn get_session(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.get(&id)?))
}

async fn next(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let view = store.get(&id)?;
    let x = view.next_stimulus.ok_or(ServiceError::Closed(id))?;
    Ok(Json(serde_json::json!({ "x": x, "index": view.next_index })))
}

async fn record(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: RecordRequest = parse(&body)?;
    Ok(Json(blocking(store, move |s| s.record(&id, req)).await?))
}

async fn undo(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let guard: IndexGuard = parse_optional(&body)?;
    Ok(Json(blocking(store, move |s| s.undo(&id, guard.expected_index)).await?))
}

async fn close(State(store): State<Store>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let guard: IndexGuard = parse_optional(&body)?;
    Ok(Json(
        blocking(store, move |s| s.close(&id, guard.expected_index)).await?,
    ))
}

async fn estimate(State(store): State<Store>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(store, move |s| s.estimate(&id)).await?))
}

async fn export(
    State(store): State<Store>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<impl IntoResponse> {
    let format: ExportFormat = q.format.as_deref().unwrap_or("json").parse()?;
    let doc = store.export(&id, format)?;
    let content_type = match format {
        ExportFormat::Json => "application/json",
        ExportFormat::Csv => "text/csv; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], doc))
}

async fn import(State(store): State<Store>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let text =
        String::from_utf8(body.to_vec()).map_err(|_| ServiceError::InvalidRecord("document is not UTF-8".into()))?;
    let view = blocking(store, move |s| s.import(&text)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("no such route".into())
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().clone();
    let response = next.run(req).await;
    tracing::info!(%method, %uri, status = response.status().as_u16(), "request");
    response
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/import", post(import))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/outcomes", post(record))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/close", post(close))
        .route("/sessions/{id}/estimate", get(estimate))
        .route("/sessions/{id}/export", get(export))
        .fallback(fallback)
        .layer(middleware::from_fn(log_request))
        .with_state(store)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    store: Arc<SessionStore>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}
