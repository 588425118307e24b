//! HTTP control/query API and the WebSocket live stream.
//!
//! Every HTTP response body is `{"ok": bool, "error"?: {kind, message},
//! "data"?: ...}`.

use std::collections::HashMap;
use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fibersense_core::sim::{CarAction, ControlCommand, SignalKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::fanout::{Delivery, StreamMessage};
use crate::pipeline::{ControlError, Shared};

#[derive(Serialize)]
struct ApiError {
    kind: &'static str,
    message: String,
}

#[derive(Serialize)]
struct ApiResponse {
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ApiError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<Value>,
}

fn ok(data: impl Serialize) -> Response {
    let data = serde_json::to_value(data).expect("response data serializes");
    Json(ApiResponse { ok: true, error: None, data: Some(data) }).into_response()
}

fn err(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Response {
    let body = ApiResponse { ok: false, error: Some(ApiError { kind, message: message.into() }), data: None };
    (status, Json(body)).into_response()
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/config", get(config))
        .route("/api/events", get(events))
        .route("/api/control/fan", post(control_fan))
        .route("/api/control/audio", post(control_audio))
        .route("/api/control/car", post(control_car))
        .route("/api/stream", get(stream))
        .fallback(|| async { err(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(shared)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    shared: Arc<Shared>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(shared)).with_graceful_shutdown(shutdown).await
}

async fn status(State(s): State<Arc<Shared>>) -> Response {
    ok(s.status())
}

async fn config(State(s): State<Arc<Shared>>) -> Response {
    ok(s.config())
}

fn parse_filter(q: &HashMap<String, String>) -> Result<(Option<f64>, Option<u64>), String> {
    if let Some(k) = q.keys().find(|k| *k != "since" && *k != "id") {
        return Err(format!("unknown filter {k:?}"));
    }
    let since = match q.get("since") {
        None => None,
        Some(v) => match v.parse::<f64>() {
            Ok(t) if t.is_finite() => Some(t),
            _ => return Err(format!("since must be a finite number of seconds, got {v:?}")),
        },
    };
    let id = match q.get("id") {
        None => None,
        Some(v) => Some(v.parse::<u64>().map_err(|_| format!("id must be a nonnegative integer, got {v:?}"))?),
    };
    Ok((since, id))
}

async fn events(State(s): State<Arc<Shared>>, Query(q): Query<HashMap<String, String>>) -> Response {
    match parse_filter(&q) {
        Ok((since, id)) => ok(s.query(since, id)),
        Err(m) => err(StatusCode::BAD_REQUEST, "validation", m),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FanBody {
    on: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AudioBody {
    signal: SignalKind,
    on: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CarBody {
    command: CarAction,
    #[serde(default)]
    speed_mps: f64,
}

#[allow(clippy::result_large_err)]
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(bytes).map_err(|e| err(StatusCode::BAD_REQUEST, "validation", format!("invalid body: {e}")))
}

async fn apply(s: &Shared, cmd: ControlCommand) -> Response {
    match s.control(cmd).await {
        Ok(t) => ok(json!({ "applied_t_s": t })),
        Err(e @ ControlError::Mode(_)) => err(StatusCode::CONFLICT, "mode", e.to_string()),
        Err(e @ ControlError::Invalid(_)) => err(StatusCode::BAD_REQUEST, "validation", e.to_string()),
        Err(e @ ControlError::Unavailable) => err(StatusCode::SERVICE_UNAVAILABLE, "unavailable", e.to_string()),
    }
}

async fn control_fan(State(s): State<Arc<Shared>>, bytes: Bytes) -> Response {
    match body::<FanBody>(&bytes) {
        Ok(b) => apply(&s, ControlCommand::SetFan { on: b.on }).await,
        Err(r) => r,
    }
}

async fn control_audio(State(s): State<Arc<Shared>>, bytes: Bytes) -> Response {
    match body::<AudioBody>(&bytes) {
        Ok(b) => apply(&s, ControlCommand::SetAudio { signal: b.signal, on: b.on }).await,
        Err(r) => r,
    }
}

async fn control_car(State(s): State<Arc<Shared>>, bytes: Bytes) -> Response {
    match body::<CarBody>(&bytes) {
        Ok(b) => apply(&s, ControlCommand::Car { command: b.command, speed_mps: b.speed_mps }).await,
        Err(r) => r,
    }
}

async fn stream(State(s): State<Arc<Shared>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_session(socket, s))
}

fn tagged(kind: &str, value: impl Serialize) -> Value {
    let mut v = serde_json::to_value(value).expect("stream messages serialize");
    v.as_object_mut().expect("stream messages are objects").insert("type".into(), kind.into());
    v
}

/// One subscriber: a snapshot, then tiles and events as they are
/// published. Event messages carry a per-connection sequence number
/// starting at 1.
async fn stream_session(mut socket: WebSocket, s: Arc<Shared>) {
    let (snap, sub) = s.hub().subscribe();
    let first = json!({
        "type": "snapshot",
        "mode": s.mode(),
        "t_s": snap.t_s,
        "config": s.config(),
        "events": snap.events,
    });
    if socket.send(Message::Text(first.to_string().into())).await.is_err() {
        return;
    }
    let mut seq = 0u64;
    loop {
        tokio::select! {
            delivery = sub.next_batch() => match delivery {
                Delivery::Messages(batch) => {
                    for m in batch {
                        let v = match m {
                            StreamMessage::Tile(t) => tagged("tile", &*t),
                            StreamMessage::Event(e) => {
                                seq += 1;
                                let mut v = tagged("event", &*e);
                                v["seq"] = seq.into();
                                v
                            }
                        };
                        if socket.send(Message::Text(v.to_string().into())).await.is_err() {
                            return;
                        }
                    }
                }
                Delivery::Overflow => {
                    let note = json!({
                        "type": "overflow",
                        "message": "event backlog exceeded the subscriber buffer; reconnect to resynchronize",
                    });
                    let _ = socket.send(Message::Text(note.to_string().into())).await;
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Delivery::Closed => {
                    let note = json!({ "type": "end", "t_s": s.status().t_s });
                    let _ = socket.send(Message::Text(note.to_string().into())).await;
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
