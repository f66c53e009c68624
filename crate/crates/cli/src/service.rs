//! HTTP session service for the dynamic mechanism.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Mutex;

use crate::error::CliError;
use crate::fixtures;
use crate::instance::{Instance, InstanceDocument};
use crate::session::{Session, SessionError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServiceConfig {
    /// Omit other officers' assigned states until the run completes.
    pub hide_assignments: bool,
}

/// Shared service state.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Store>,
}

#[derive(Default)]
struct Store {
    next: AtomicU64,
    sessions: StdMutex<HashMap<String, Arc<Mutex<Session>>>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Store {
                config,
                ..Store::default()
            }),
        }
    }

    /// The session's lock; held by a submission while it is processed.
    pub fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
    }

    fn insert(&self, session: Session) -> String {
        let id = (self.inner.next.fetch_add(1, Ordering::Relaxed) + 1).to_string();
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }
}

/// A JSON error body `{"error": {"code", "message"}}` with a status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": {"code": self.code, "message": self.message}})),
        )
            .into_response()
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::UnknownFixture(_) => StatusCode::NOT_FOUND,
            CliError::Parse { .. } | CliError::Usage(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::InvalidRanking(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::CONFLICT,
        };
        Self::new(status, e.code(), e.message())
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    fixture: Option<String>,
    instance: Option<InstanceDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankingRequest {
    officer_id: String,
    ranking: Vec<String>,
}

async fn create(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse_body(&body)?;
    let instance = match (req.fixture, req.instance) {
        (Some(name), None) => fixtures::load(&name)?,
        (None, Some(doc)) => Instance::from_document(doc, "session")?,
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "give exactly one of `fixture` and `instance`",
            ))
        }
    };
    let session = Session::new(Arc::new(instance), state.inner.config.hide_assignments)?;
    let (status, menu) = (session.status(), session.menu());
    let id = state.insert(session);
    Ok((
        StatusCode::CREATED,
        Json(json!({"session_id": id, "status": status, "menu": menu})),
    )
        .into_response())
}

async fn show(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let guard = session.lock().await;
    Ok(Json(guard.view(&id)).into_response())
}

async fn submit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let req: RankingRequest = parse_body(&body)?;
    let mut guard = session.try_lock().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "submission_in_flight",
            "another submission for this session is being processed",
        )
    })?;
    let result = guard.submit(&req.officer_id, &req.ranking)?;
    Ok(Json(result).into_response())
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = state.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let guard = session.lock().await;
    Ok(Json(guard.report()?).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/rankings", post(submit))
        .route("/sessions/{id}/report", get(report))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
