//! HTTP and WebSocket front end. Every response is a projection of kernel
//! state; the stream carries notices in kernel order.

use std::net::SocketAddr;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dmoe_core::kernel::{KernelError, Notice};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::live::LiveKernel;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MessageBody {
    pub text: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct StreamQuery {
    #[serde(default)]
    pub cursor: u64,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<KernelError> for ApiError {
    fn from(e: KernelError) -> Self {
        let status = match e {
            KernelError::SessionBusy(_) | KernelError::ExpertBusy(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn not_found(what: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("{what} not found"))
}

pub fn router(live: LiveKernel) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(session_events))
        .route("/registry/active", get(active_registry))
        .route("/registry/cold", get(cold_registry))
        .route("/manifest", get(manifest))
        .route("/gap-reports", get(gap_reports))
        .route("/metrics/{id}", get(session_metrics))
        .route("/listener/run", post(run_listener))
        .route("/stream", get(stream))
        .with_state(live)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(live: LiveKernel, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(live, tokio::net::TcpListener::bind(addr).await?).await
}

/// Serves on an already bound listener.
pub async fn serve_on(live: LiveKernel, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(live)).await
}

async fn create_session(State(live): State<LiveKernel>) -> (StatusCode, Json<SessionCreated>) {
    let session_id = live.create_session();
    (StatusCode::CREATED, Json(SessionCreated { session_id }))
}

async fn post_message(
    State(live): State<LiveKernel>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<Response, ApiError> {
    if !live.read(|k| k.has_session(&id)) {
        return Err(not_found("session"));
    }
    let result = tokio::task::spawn_blocking(move || live.handle_turn(&id, &body.text))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(result).into_response())
}

async fn session_events(State(live): State<LiveKernel>, Path(id): Path<String>) -> Result<Response, ApiError> {
    live.read(|k| {
        if !k.has_session(&id) {
            return Err(not_found("session"));
        }
        Ok(Json(k.context(&id)).into_response())
    })
}

async fn active_registry(State(live): State<LiveKernel>) -> Response {
    live.read(|k| Json(k.registry().snapshot(&k.config().base_instruction)).into_response())
}

async fn cold_registry(State(live): State<LiveKernel>) -> Response {
    live.read(|k| Json(k.cold().iter().collect::<Vec<_>>()).into_response())
}

async fn manifest(State(live): State<LiveKernel>) -> Response {
    live.read(|k| Json(k.manifest()).into_response())
}

async fn gap_reports(State(live): State<LiveKernel>) -> Response {
    live.read(|k| {
        Json(json!({
            "lines": k.gaps().lines(),
            "reports": k.gaps().reports(),
        }))
        .into_response()
    })
}

async fn session_metrics(State(live): State<LiveKernel>, Path(id): Path<String>) -> Result<Response, ApiError> {
    live.read(|k| {
        if !k.has_session(&id) {
            return Err(not_found("session"));
        }
        Ok(Json(k.session_metrics(&id)).into_response())
    })
}

async fn run_listener(State(live): State<LiveKernel>) -> Result<Response, ApiError> {
    let actions = tokio::task::spawn_blocking(move || live.run_listener())
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(actions).into_response())
}

async fn stream(
    ws: WebSocketUpgrade,
    Query(q): Query<StreamQuery>,
    State(live): State<LiveKernel>,
) -> Response {
    ws.on_upgrade(move |socket| pump(socket, live, q.cursor))
}

async fn send_notice(socket: &mut WebSocket, n: &Notice) -> bool {
    let text = serde_json::to_string(n).expect("notices serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

/// Replays the log after `cursor`, then forwards live notices. Sequence
/// numbers make the hand-over gap-free and duplicate-free.
async fn pump(mut socket: WebSocket, live: LiveKernel, cursor: u64) {
    let mut rx = live.subscribe();
    let mut last = cursor;
    for n in live.notices_since(last) {
        if !send_notice(&mut socket, &n).await {
            return;
        }
        last = n.seq;
    }
    loop {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(n) if n.seq > last => {
                    if !send_notice(&mut socket, &n).await {
                        return;
                    }
                    last = n.seq;
                }
                Ok(_) => {}
                Err(RecvError::Lagged(_)) => {
                    for n in live.notices_since(last) {
                        if !send_notice(&mut socket, &n).await {
                            return;
                        }
                        last = n.seq;
                    }
                }
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
