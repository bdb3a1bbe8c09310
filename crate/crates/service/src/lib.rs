//! Session service: mission runs over HTTP, with a replayable
//! server-sent-event stream per session.
//!
//! ```text
//! GET  /scenarios
//! POST /sessions                  {"spec", "scenario_id", "step_mode"?}
//! GET  /sessions/{id}
//! POST /sessions/{id}/message     {"text"}
//! POST /sessions/{id}/approve
//! GET  /sessions/{id}/events?from=N
//! ```

mod session;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use groundplan::mission::{LoopConfig, MissionSession, ModelClient};
use groundplan::sim::{ScenarioError, WorldScenario};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

pub use session::{SeqEvent, SessionHandle, SessionState, SessionView};

/// Builds the planner for a new session from its spec and world.
pub type ClientFactory = Arc<dyn Fn(&str, &WorldScenario) -> Box<dyn ModelClient> + Send + Sync>;

pub struct ServiceConfig {
    pub scenarios: BTreeMap<String, WorldScenario>,
    pub clients: ClientFactory,
    pub loop_config: LoopConfig,
}

/// Loads every `*.json` scenario in a directory, keyed by scenario id.
pub fn load_scenarios(
    dir: impl AsRef<Path>,
) -> Result<BTreeMap<String, WorldScenario>, ScenarioError> {
    let dir = dir.as_ref();
    let io = |source| ScenarioError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let w = WorldScenario::load(&p)?;
        out.insert(w.id.clone(), w);
    }
    Ok(out)
}

struct Inner {
    cfg: ServiceConfig,
    sessions: Mutex<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Self {
        AppState(Arc::new(Inner {
            cfg,
            sessions: Mutex::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.0
            .sessions
            .lock()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session '{id}'")))
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    spec: String,
    scenario_id: String,
    #[serde(default)]
    step_mode: bool,
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    text: String,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

async fn list_scenarios(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.0.cfg.scenarios.keys().cloned().collect())
}

async fn create_session(
    State(app): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    if req.spec.trim().is_empty() {
        return Err(ApiError::Invalid("spec must not be empty".into()));
    }
    let world = app
        .0
        .cfg
        .scenarios
        .get(&req.scenario_id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown scenario '{}'", req.scenario_id)))?;
    let id = format!("s{}", app.0.next_id.fetch_add(1, Ordering::SeqCst));
    let client = (app.0.cfg.clients)(&req.spec, world);
    let session = MissionSession::new(req.spec, world.clone(), app.0.cfg.loop_config);
    let handle = SessionHandle::new(id.clone(), req.scenario_id, req.step_mode, session, client);
    app.0
        .sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), Arc::clone(&handle));
    tracing::info!(session = %id, scenario = %handle.scenario_id, "session created");
    let view = handle.view();
    tokio::spawn(handle.drive());
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    Ok(Json(app.session(&id)?.view()))
}

async fn post_message(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<MessageRequest>,
) -> Result<StatusCode, ApiError> {
    let h = app.session(&id)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::Invalid("message text must not be empty".into()));
    }
    if h.is_done() {
        return Err(ApiError::Conflict(format!("session '{id}' is done")));
    }
    h.post(req.text);
    Ok(StatusCode::ACCEPTED)
}

async fn approve(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<StatusCode, ApiError> {
    let h = app.session(&id)?;
    if !h.awaiting_approval() {
        return Err(ApiError::Conflict(format!(
            "session '{id}' is not awaiting approval"
        )));
    }
    h.approve();
    Ok(StatusCode::ACCEPTED)
}

fn frame(e: &SeqEvent) -> Event {
    let kind = serde_json::to_value(&e.event)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_string))
        .unwrap_or_default();
    Event::default()
        .id(e.seq.to_string())
        .event(kind)
        .data(serde_json::to_string(e).expect("event serializes"))
}

/// All events from `from` on, then live ones; the stream closes after the
/// done event. A `Last-Event-ID` header resumes after that id when `from`
/// is absent.
async fn stream_events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let h = app.session(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|last| last + 1);
    let from = q.from.or(resume).unwrap_or(0);
    let rx = h.subscribe();
    let stream = futures::stream::unfold((h, rx, from), |(h, mut rx, next)| async move {
        loop {
            if let Some(e) = h.event(next) {
                return Some((Ok(frame(&e)), (h, rx, next + 1)));
            }
            if h.finished() || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/approve", post(approve))
        .route("/sessions/{id}/events", get(stream_events))
        .with_state(state)
}

/// Binds and serves until the process ends. Reports the bound address
/// through `on_bound` (useful with port 0).
pub async fn serve(
    cfg: ServiceConfig,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(AppState::new(cfg))).await
}
