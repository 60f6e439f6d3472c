//! HTTP service over the tool registry and the agent.
//!
//! | route                 | body / result                                             |
//! |-----------------------|-----------------------------------------------------------|
//! | `POST /chat`          | `{message, persona, session_id?}` → transcript summary    |
//! | `POST /tools/{name}`  | tool arguments → tool result                              |
//! | `GET /personas`       | roles with their system prompts                           |
//! | `GET /counties/{name}`| full county record                                        |
//! | `GET /healthz`        | liveness and backend kind                                 |

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::copilot::{
    all_personas, run_turn, AgentConfig, AgentError, ChatBackend, Role, Session, ToolError, ToolRegistry, TraceEntry,
    Transcript,
};
use crate::store::{AgroStore, StoreError};

pub struct AppState {
    pub store: Arc<AgroStore>,
    pub registry: Arc<ToolRegistry>,
    pub backend: Arc<dyn ChatBackend>,
    pub agent: AgentConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(
        store: Arc<AgroStore>,
        registry: Arc<ToolRegistry>,
        backend: Arc<dyn ChatBackend>,
        agent: AgentConfig,
    ) -> Self {
        Self { store, registry, backend, agent, sessions: Mutex::new(HashMap::new()) }
    }
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub message: String,
    #[serde(default)]
    pub persona: Option<String>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    pub transcript_id: String,
    pub session_id: String,
    pub persona: Role,
    pub answer: String,
    pub truncated: bool,
    pub tool_trace: Vec<TraceEntry>,
    pub transcript: Transcript,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": { "code": code, "message": message.into() } }))).into_response()
}

fn tool_status(e: &ToolError) -> StatusCode {
    match e.code.as_str() {
        "invalid_arguments" => StatusCode::BAD_REQUEST,
        "unknown_tool" | "county_not_found" | "no_data" => StatusCode::NOT_FOUND,
        "no_corpus" => StatusCode::SERVICE_UNAVAILABLE,
        "retrieval_error" => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/chat", post(chat))
        .route("/tools/{name}", post(invoke_tool))
        .route("/personas", get(personas))
        .route("/counties/{name}", get(county))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "backend": state.backend.kind(),
        "tools": state.registry.len(),
        "counties": state.store.county_names().count(),
    }))
}

async fn personas() -> Json<Value> {
    Json(json!(all_personas()))
}

async fn county(State(state): State<Arc<AppState>>, Path(name): Path<String>) -> Response {
    match state.store.county(&name) {
        Ok(rec) => Json(rec).into_response(),
        Err(e @ StoreError::CountyNotFound(_)) => error(StatusCode::NOT_FOUND, e.code(), e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string()),
    }
}

async fn invoke_tool(State(state): State<Arc<AppState>>, Path(name): Path<String>, body: Bytes) -> Response {
    let args: Value = if body.iter().all(u8::is_ascii_whitespace) {
        json!({})
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()),
        }
    };
    // accept both the bare argument object and {"args": {...}}
    let args = match args {
        Value::Object(mut m) if m.len() == 1 && m.get("args").is_some_and(Value::is_object) => {
            m.remove("args").unwrap()
        }
        other => other,
    };
    match state.registry.invoke(&name, &args) {
        Ok(v) => Json(v).into_response(),
        Err(e) => (tool_status(&e), Json(e.to_json())).into_response(),
    }
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()),
    };
    let role = match req.persona.as_deref().map(str::parse::<Role>).transpose() {
        Ok(r) => r,
        Err(e) => {
            let roles: Vec<&str> = Role::ALL.iter().map(|r| r.as_str()).collect();
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": { "code": "unknown_persona", "message": e.to_string(), "valid_roles": roles } })),
            )
                .into_response();
        }
    };
    if req.message.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_message", "message must not be empty");
    }

    let session = {
        let mut sessions = state.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let id = req.session_id.clone().unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        sessions
            .entry(id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(Session::new(id, role.unwrap_or(Role::Default)))))
            .clone()
    };
    let worker = state.clone();
    let message = req.message;
    let outcome = tokio::task::spawn_blocking(move || {
        let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
        if role.is_some_and(|r| r != s.persona) {
            return Err(None);
        }
        run_turn(&mut s, &message, worker.backend.as_ref(), &worker.registry, &worker.agent).map_err(Some)
    })
    .await;
    match outcome {
        Ok(Ok(t)) => Json(ChatResponse {
            transcript_id: t.transcript_id.clone(),
            session_id: t.session_id.clone(),
            persona: t.persona,
            answer: t.answer.clone(),
            truncated: t.truncated,
            tool_trace: t.tool_trace(),
            transcript: t,
        })
        .into_response(),
        Ok(Err(None)) => {
            error(StatusCode::CONFLICT, "persona_mismatch", "session was started with a different persona")
        }
        Ok(Err(Some(AgentError::Backend(e)))) => error(StatusCode::BAD_GATEWAY, "backend_error", e.to_string()),
        Ok(Err(Some(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, "agent_error", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "agent_panicked", e.to_string()),
    }
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    state: Arc<AppState>,
    addr: SocketAddr,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, backend = state.backend.kind(), "listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
