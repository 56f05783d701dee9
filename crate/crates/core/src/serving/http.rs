//! JSON-over-HTTP front end: `POST /rank` and `GET /health`.

use std::sync::{Arc, RwLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{RankRequest, Serving};
use crate::error::Error;

/// Shared handle to the active model and store. Swapping replaces both at
/// once; in-flight requests finish on the version they started with.
#[derive(Clone)]
pub struct AppState {
    active: Arc<RwLock<Arc<Serving>>>,
}

impl AppState {
    pub fn new(serving: Serving) -> Self {
        Self {
            active: Arc::new(RwLock::new(Arc::new(serving))),
        }
    }

    pub fn current(&self) -> Arc<Serving> {
        self.active.read().expect("serving lock").clone()
    }

    pub fn swap(&self, serving: Serving) {
        *self.active.write().expect("serving lock") = Arc::new(serving);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/rank", post(rank))
        .route("/health", get(health))
        .with_state(state)
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "model_version": state.current().model_version}))
}

async fn rank(State(state): State<AppState>, Json(req): Json<RankRequest>) -> Response {
    let serving = state.current();
    match serving.rank(&req) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => {
            let status = match e {
                Error::UnknownArticle(_) | Error::Invalid(_) => StatusCode::BAD_REQUEST,
                Error::VersionMismatch { .. } => StatusCode::CONFLICT,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            };
            (status, Json(json!({"error": e.to_string()}))).into_response()
        }
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, state: AppState, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
