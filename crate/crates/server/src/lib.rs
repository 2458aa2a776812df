//! Local HTTP API for playing branchtalk conversations from a browser.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | `{"status":"ok"}` |
//! | GET | `/project` | | [`ProjectView`] |
//! | POST | `/sessions` | [`CreateSession`] | [`Created`] |
//! | GET | `/sessions/{id}` | | [`Snapshot`] |
//! | DELETE | `/sessions/{id}` | | 204 |
//! | POST | `/sessions/{id}/choose` | [`ChooseRequest`] | [`Snapshot`] |
//! | POST | `/sessions/{id}/state` | [`StateRequest`] | [`Snapshot`] |
//! | GET | `/sessions/{id}/events` | | SSE stream of `delta` events ([`Delta`]) |
//!
//! Errors come back as `{"error": "..."}` with 404 for unknown sessions or
//! starts, 400 for bad input and 409 for choices on an ended conversation.
//! A failed request never changes the session.
//!
//! The event stream only carries changes made after the client connected;
//! fetch `/sessions/{id}` for the current state.

pub mod wire;

use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use branchtalk::{ActorId, NodeId, Project, RuntimeError, SelectionPolicy, Session, SessionOptions, StateTarget};
use futures::Stream;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, Mutex};
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

pub use wire::*;

const EVENT_BUFFER: usize = 64;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Seed for sessions that do not name one.
    pub default_seed: u64,
    pub max_steps: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            default_seed: 0,
            max_steps: branchtalk::runtime::DEFAULT_MAX_STEPS,
        }
    }
}

struct Live {
    session: Session,
    version: u64,
}

struct Slot {
    id: String,
    #[allow(dead_code)]
    created_at: SystemTime,
    live: Mutex<Live>,
    events: broadcast::Sender<Delta>,
}

impl Slot {
    fn snapshot(&self, live: &Live) -> Snapshot {
        Snapshot {
            session_id: self.id.clone(),
            version: live.version,
            live: LiveView::new(&live.session),
            transcript: live.session.transcript().iter().map(EntryView::from).collect(),
        }
    }
}

struct AppState {
    project: Arc<Project>,
    project_view: ProjectView,
    config: ServerConfig,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        let status = match &e {
            RuntimeError::StartNotFound(_) | RuntimeError::NodeNotFound(_) => StatusCode::NOT_FOUND,
            RuntimeError::InvalidPhase(_) => StatusCode::CONFLICT,
            RuntimeError::InvalidChoice(_) | RuntimeError::StateNotFound { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(project: Arc<Project>, config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        project_view: ProjectView::new(&project),
        project,
        config,
        sessions: RwLock::new(HashMap::new()),
    });
    Router::new()
        .route("/health", get(health))
        .route("/project", get(project_view))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/state", post(set_state))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    project: Arc<Project>,
    config: ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(project, config))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `127.0.0.1:port` (0 picks a free port).
pub async fn bind_localhost(port: u16) -> std::io::Result<(TcpListener, SocketAddr)> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn project_view(State(app): State<Arc<AppState>>) -> Json<ProjectView> {
    Json(app.project_view.clone())
}

fn parse_policy(req: &CreateSession, default_seed: u64) -> Result<SelectionPolicy, ApiError> {
    let seed = req.seed.unwrap_or(default_seed);
    match req.policy.as_deref().unwrap_or("argmax") {
        "argmax" => Ok(SelectionPolicy::Argmax),
        "softmax" => SelectionPolicy::softmax(req.temperature.unwrap_or(1.0), seed)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string())),
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("unknown policy `{other}` (expected argmax or softmax)"),
        )),
    }
}

async fn create_session(State(app): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> ApiResult<Created> {
    let policy = parse_policy(&req, app.config.default_seed)?;
    let options = SessionOptions {
        policy,
        max_steps: app.config.max_steps,
    };
    let session = Session::start(Arc::clone(&app.project), &req.start_name, options, &[])?;
    let id = uuid::Uuid::new_v4().to_string();
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let slot = Arc::new(Slot {
        id: id.clone(),
        created_at: SystemTime::now(),
        live: Mutex::new(Live { session, version: 0 }),
        events,
    });
    let snapshot = slot.snapshot(&*slot.live.lock().await);
    app.sessions.write().expect("session table poisoned").insert(id.clone(), slot);
    tracing::debug!(session = %id, start = %req.start_name, "session created");
    Ok(Json(Created {
        session_id: id,
        snapshot,
    }))
}

fn lookup(app: &AppState, id: &str) -> Result<Arc<Slot>, ApiError> {
    app.sessions
        .read()
        .expect("session table poisoned")
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`")))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Snapshot> {
    let slot = lookup(&app, &id)?;
    let live = slot.live.lock().await;
    Ok(Json(slot.snapshot(&live)))
}

async fn delete_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match app.sessions.write().expect("session table poisoned").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown session `{id}`"))),
    }
}

/// Runs `f` on a copy of the session and commits only on success, then
/// publishes one delta.
async fn mutate(
    slot: &Slot,
    cause: &str,
    f: impl FnOnce(&mut Session) -> Result<(), ApiError>,
) -> Result<Snapshot, ApiError> {
    let mut live = slot.live.lock().await;
    let mut draft = live.session.clone();
    f(&mut draft)?;
    let before = live.session.transcript().len();
    live.session = draft;
    live.version += 1;
    let delta = Delta {
        session_id: slot.id.clone(),
        version: live.version,
        cause: cause.to_owned(),
        live: LiveView::new(&live.session),
        new_entries: live.session.transcript()[before..].iter().map(EntryView::from).collect(),
        transcript_length: live.session.transcript().len(),
    };
    // no subscribers is fine
    let _ = slot.events.send(delta);
    Ok(slot.snapshot(&live))
}

async fn choose(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ChooseRequest>,
) -> ApiResult<Snapshot> {
    let slot = lookup(&app, &id)?;
    let node = NodeId::new(req.node_id);
    let snapshot = mutate(&slot, "choose", |s| s.choose(&node).map_err(ApiError::from)).await?;
    Ok(Json(snapshot))
}

fn state_target(session: &Session, req: &StateRequest) -> Result<StateTarget, ApiError> {
    match (req.scope.as_str(), &req.actor) {
        ("player", None) => Ok(StateTarget::Player),
        ("player", Some(_)) => Err(ApiError::new(StatusCode::BAD_REQUEST, "player edits take no actor")),
        ("npc", Some(actor)) => Ok(StateTarget::Npc(ActorId::new(actor.clone()))),
        ("npc", None) => {
            if let Some(c) = session.conversant() {
                return Ok(StateTarget::Npc(c.clone()));
            }
            let mut npcs = session.npc_states().keys();
            match (npcs.next(), npcs.next()) {
                (Some(only), None) => Ok(StateTarget::Npc(only.clone())),
                _ => Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "no conversant yet; name the NPC with `actor`",
                )),
            }
        }
        (other, _) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("unknown scope `{other}` (expected player or npc)"),
        )),
    }
}

async fn set_state(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<StateRequest>,
) -> ApiResult<Snapshot> {
    let slot = lookup(&app, &id)?;
    if !req.value.is_finite() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "state value must be finite"));
    }
    let snapshot = mutate(&slot, "state", |s| {
        let target = state_target(s, &req)?;
        s.set_state(&target, &req.name, req.value)?;
        Ok(())
    })
    .await?;
    Ok(Json(snapshot))
}

async fn events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = lookup(&app, &id)?;
    let stream = BroadcastStream::new(slot.events.subscribe()).filter_map(|delta| {
        // lagging subscribers skip what they missed
        let delta = delta.ok()?;
        let event = Event::default()
            .event("delta")
            .id(delta.version.to_string())
            .json_data(&delta)
            .ok()?;
        Some(Ok(event))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
