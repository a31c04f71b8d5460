//! JSON over HTTP/1.1. Errors are `{"error": {"kind", "message"}}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use formula_scout::grid::{export_workbook, load_workbook};
use serde_json::json;

use crate::state::{PredictRequest, ServiceError, ServiceState};

/// Uploads and inline workbooks can be large.
const BODY_LIMIT: usize = 64 << 20;

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::UnknownWorkbook(_) | ServiceError::UnknownSheet { .. } => StatusCode::NOT_FOUND,
            ServiceError::OutOfBounds(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::UnknownWorkbook(_) => "unknown_workbook",
            ServiceError::UnknownSheet { .. } => "unknown_sheet",
            ServiceError::OutOfBounds(_) => "out_of_bounds",
            ServiceError::Internal(_) => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.kind(), "message": self.to_string()}});
        (self.status(), Json(body)).into_response()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/workbooks", post(add_workbook))
        .route("/workbooks/{id}", get(get_workbook))
        .route("/predict", post(predict))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health(State(st): State<Arc<ServiceState>>) -> Response {
    let snap = st.snapshot();
    Json(json!({"status": "ok", "sheets": snap.sheets(), "formulas": snap.formulas()})).into_response()
}

/// Prediction and indexing are CPU-bound; keep them off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn add_workbook(State(st): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, ServiceError> {
    let wb = load_workbook(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let added = blocking(move || st.add_workbook(wb)).await?;
    let status = if added.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(added)).into_response())
}

async fn get_workbook(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let snap = st.snapshot();
    let wb = snap.library.get(&id).ok_or(ServiceError::UnknownWorkbook(id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], export_workbook(wb)).into_response())
}

async fn predict(State(st): State<Arc<ServiceState>>, body: Bytes) -> Result<Response, ServiceError> {
    let req: PredictRequest = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let resp = blocking(move || st.predict(&req)).await?;
    Ok(Json(resp).into_response())
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<ServiceState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
