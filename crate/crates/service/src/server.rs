use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use meshsplat_client::protocol::{
    ClientMessage, ErrorReply, FrameFormat, FramePayload, Health, LayoutInfo, RenderRequest,
    ServerMessage, StateMessage, Stats,
};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::watch;

use crate::engine::{Engine, Rejection};
use crate::hub::{FrameHub, Output, Produced, Subscriber};

/// Frames a session may fall behind before it starts skipping.
const SESSION_BACKLOG: usize = 4;
/// Frame completions used for the reported FPS.
const FPS_WINDOW: usize = 30;

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    jobs: Arc<watch::Sender<Option<Arc<StateMessage>>>>,
    hub: FrameHub,
}

/// A running render loop plus the HTTP/websocket routes that feed it.
pub struct Service {
    state: AppState,
}

impl Service {
    /// Starts the render loop; must be called inside a tokio runtime.
    pub fn start(engine: Engine) -> Self {
        let engine = Arc::new(engine);
        let (tx, rx) = watch::channel(None);
        let hub = FrameHub::new(SESSION_BACKLOG);
        tokio::spawn(render_loop(engine.clone(), rx, hub.clone()));
        Self {
            state: AppState {
                engine,
                jobs: Arc::new(tx),
                hub,
            },
        }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/health", get(health))
            .route("/layout", get(layout))
            .route("/render", post(render_once))
            .route("/ws", get(websocket))
            .with_state(self.state.clone())
    }

    pub async fn serve(self, listener: TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }
}

/// Renders the newest submitted state; states that arrive while a render is
/// in flight replace each other and only the last one is rendered.
async fn render_loop(
    engine: Arc<Engine>,
    mut jobs: watch::Receiver<Option<Arc<StateMessage>>>,
    hub: FrameHub,
) {
    let mut seq = 0u64;
    let mut completions: VecDeque<Instant> = VecDeque::with_capacity(FPS_WINDOW);
    while jobs.changed().await.is_ok() {
        let Some(state) = jobs.borrow_and_update().clone() else {
            continue;
        };
        let e = engine.clone();
        let result = tokio::task::spawn_blocking(move || {
            let frame = e.render(&state.psi, &state.camera, state.background, None)?;
            let rgb = frame.image.to_srgb8();
            let png = frame.image.encode_png().map_err(|err| Rejection {
                message: err.to_string(),
                expected_psi_len: None,
            })?;
            Ok::<_, Rejection>((frame.image.width, frame.image.height, rgb, png, frame.ms))
        })
        .await;
        let out = match result {
            Ok(Ok((width, height, rgb, png, ms))) => {
                seq += 1;
                let now = Instant::now();
                if completions.len() == FPS_WINDOW {
                    completions.pop_front();
                }
                completions.push_back(now);
                let fps = match (completions.front(), completions.len()) {
                    (Some(first), n) if n >= 2 && now > *first => {
                        (n - 1) as f64 / (now - *first).as_secs_f64()
                    }
                    _ => 1e3 / ms.max(1e-3),
                };
                Output::Frame(Produced {
                    seq,
                    width,
                    height,
                    rgb,
                    png,
                    ms,
                    fps,
                })
            }
            Ok(Err(rej)) => Output::Failed(rej.message),
            Err(join) => Output::Failed(format!("render task failed: {join}")),
        };
        if let Output::Failed(m) = &out {
            log::warn!("render failed: {m}");
        }
        hub.publish(out);
    }
}

fn reply_error(status: StatusCode, rej: Rejection) -> Response {
    let body = ErrorReply {
        message: rej.message,
        expected_psi_len: rej.expected_psi_len,
    };
    (status, Json(body)).into_response()
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        gaussians: app.engine.avatar().len(),
    })
}

async fn layout(State(app): State<AppState>) -> Json<LayoutInfo> {
    Json(app.engine.layout())
}

async fn render_once(State(app): State<AppState>, body: Bytes) -> Response {
    let req: RenderRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return reply_error(
                StatusCode::BAD_REQUEST,
                Rejection {
                    message: format!("malformed render request: {e}"),
                    expected_psi_len: None,
                },
            )
        }
    };
    let engine = app.engine.clone();
    let result = tokio::task::spawn_blocking(move || {
        let (w, h) = engine.size();
        let size = (req.width.unwrap_or(w), req.height.unwrap_or(h));
        let frame = engine.render(&req.psi, &req.camera, req.background, Some(size))?;
        frame.image.encode_png().map_err(|e| Rejection {
            message: e.to_string(),
            expected_psi_len: None,
        })
    })
    .await;
    match result {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Ok(Err(rej)) => reply_error(StatusCode::BAD_REQUEST, rej),
        Err(e) => reply_error(
            StatusCode::INTERNAL_SERVER_ERROR,
            Rejection {
                message: format!("render task failed: {e}"),
                expected_psi_len: None,
            },
        ),
    }
}

#[derive(Deserialize)]
struct WsQuery {
    #[serde(default)]
    format: FrameFormat,
}

async fn websocket(
    State(app): State<AppState>,
    Query(q): Query<WsQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    // Subscribe before the handshake completes so no frame published after
    // the client sees the upgrade is missed.
    let frames = app.hub.subscribe();
    upgrade.on_upgrade(move |socket| session(socket, app, frames, q.format))
}

fn json_message(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server message serializes").into())
}

fn error_message(message: String, expected_psi_len: Option<usize>) -> Message {
    json_message(&ServerMessage::Error(ErrorReply {
        message,
        expected_psi_len,
    }))
}

/// Parses one client text message; invalid input yields the error reply to send.
fn handle_text(engine: &Engine, text: &str) -> Result<StateMessage, Message> {
    let msg: ClientMessage =
        serde_json::from_str(text).map_err(|e| error_message(format!("malformed message: {e}"), None))?;
    let ClientMessage::State(state) = msg;
    engine
        .check(&state)
        .map_err(|r| error_message(r.message, r.expected_psi_len))?;
    Ok(state)
}

async fn session(socket: WebSocket, app: AppState, mut frames: Subscriber, format: FrameFormat) {
    let (mut sink, mut stream) = socket.split();
    let gaussians = app.engine.avatar().len();
    loop {
        tokio::select! {
            incoming = stream.next() => {
                let reply = match incoming {
                    Some(Ok(Message::Text(text))) => match handle_text(&app.engine, text.as_str()) {
                        Ok(state) => {
                            app.jobs.send_replace(Some(Arc::new(state)));
                            None
                        }
                        Err(reply) => Some(reply),
                    },
                    Some(Ok(Message::Binary(_))) => {
                        Some(error_message("binary messages are not accepted".into(), None))
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => None,
                };
                if let Some(reply) = reply {
                    if sink.send(reply).await.is_err() {
                        break;
                    }
                }
            }
            out = frames.next() => {
                let Some(out) = out else { break };
                let messages = match &*out {
                    Output::Frame(p) => {
                        let stats = ServerMessage::Stats(Stats {
                            fps: p.fps,
                            gaussians,
                            last_ms: p.ms,
                            dropped: frames.dropped(),
                            seq: p.seq,
                        });
                        vec![Message::Binary(frame_bytes(p, format).into()), json_message(&stats)]
                    }
                    Output::Failed(m) => vec![error_message(m.clone(), None)],
                };
                let mut closed = false;
                for m in messages {
                    if sink.send(m).await.is_err() {
                        closed = true;
                        break;
                    }
                }
                if closed {
                    break;
                }
            }
        }
    }
}

fn frame_bytes(p: &Produced, format: FrameFormat) -> Vec<u8> {
    FramePayload {
        seq: p.seq,
        format,
        width: p.width,
        height: p.height,
        data: match format {
            FrameFormat::Png => p.png.clone(),
            FrameFormat::Raw => p.rgb.clone(),
        },
    }
    .encode()
}
