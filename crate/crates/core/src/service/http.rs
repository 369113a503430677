use super::{Id, Service, ServiceError};
use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use std::net::SocketAddr;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::ConfigError(_) => StatusCode::BAD_REQUEST,
            ServiceError::InvalidToken => StatusCode::FORBIDDEN,
            ServiceError::UnknownParticipant(_) | ServiceError::NotFound(_) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::SessionClosed(_)
            | ServiceError::RunInProgress(_)
            | ServiceError::NoValidAvatar(_)
            | ServiceError::RunNotDone(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut error = json!({ "code": self.code(), "message": self.to_string() });
        if let ServiceError::NoValidAvatar(ids) = &self {
            error["participants"] = json!(ids);
        }
        (status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult = Result<Response, ServiceError>;

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ServiceError> {
    let bytes: &[u8] = if bytes.is_empty() { b"{}" } else { bytes };
    serde_json::from_slice(bytes)
        .map_err(|e| ServiceError::ConfigError(format!("request body: {e}")))
}

fn created<T: serde::Serialize>(value: T) -> ApiResult {
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

fn ok<T: serde::Serialize>(value: T) -> ApiResult {
    Ok(Json(value).into_response())
}

/// Runs a blocking service call off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(e.to_string()))?
}

async fn create_session(State(svc): State<Service>, bytes: Bytes) -> ApiResult {
    let cfg = body(&bytes)?;
    created(blocking(move || svc.create_session(cfg)).await?)
}

async fn close_session(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    ok(blocking(move || svc.close_session(id)).await?)
}

async fn add_participant(
    State(svc): State<Service>,
    Path(id): Path<Id>,
    bytes: Bytes,
) -> ApiResult {
    let p = body(&bytes)?;
    created(blocking(move || svc.add_participant(id, p)).await?)
}

async fn submit_avatar(State(svc): State<Service>, Path(id): Path<Id>, bytes: Bytes) -> ApiResult {
    let sub = body(&bytes)?;
    created(blocking(move || svc.submit_avatar(id, sub)).await?)
}

async fn start_run(State(svc): State<Service>, Path(id): Path<Id>, bytes: Bytes) -> ApiResult {
    let o = body(&bytes)?;
    let r = blocking(move || svc.start_run(id, o)).await?;
    Ok((StatusCode::ACCEPTED, Json(r)).into_response())
}

async fn get_run(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    ok(blocking(move || svc.run_record(id)).await?)
}

async fn get_report(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    let text = blocking(move || svc.report_json(id)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn get_leaderboard(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    ok(blocking(move || svc.leaderboard(id)).await?)
}

async fn get_history(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    ok(blocking(move || svc.history(id)).await?)
}

async fn get_versions(State(svc): State<Service>, Path(id): Path<Id>) -> ApiResult {
    ok(blocking(move || svc.versions(id)).await?)
}

pub fn router(svc: Service) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/close", post(close_session))
        .route("/sessions/{id}/participants", post(add_participant))
        .route("/sessions/{id}/avatars", post(submit_avatar))
        .route("/sessions/{id}/runs", post(start_run))
        .route("/sessions/{id}/history", get(get_history))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/report", get(get_report))
        .route("/runs/{id}/leaderboard", get(get_leaderboard))
        .route("/participants/{id}/versions", get(get_versions))
        .with_state(svc)
}

pub async fn serve(svc: Service, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc)).await
}
