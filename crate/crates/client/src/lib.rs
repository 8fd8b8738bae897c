//! Client for the meshsplat render service: HTTP calls for one-off renders and
//! a websocket session for live driving.

pub mod protocol;

use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use protocol::{
    ClientMessage, ErrorReply, FrameFormat, FrameError, FramePayload, Health, LayoutInfo,
    RenderRequest, ServerMessage, StateMessage,
};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("bad frame: {0}")]
    Frame(#[from] FrameError),
    #[error("bad message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("service returned {status}: {message}")]
    Service { status: u16, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn checked(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorReply>(&text)
            .map(|e| e.message)
            .unwrap_or(text);
        Err(ClientError::Service {
            status: status.as_u16(),
            message,
        })
    }

    pub async fn health(&self) -> Result<Health> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    pub async fn layout(&self) -> Result<LayoutInfo> {
        let resp = self.http.get(format!("{}/layout", self.base)).send().await?;
        Ok(Self::checked(resp).await?.json().await?)
    }

    /// Renders one frame and returns the PNG bytes.
    pub async fn render(&self, req: &RenderRequest) -> Result<Vec<u8>> {
        let resp = self
            .http
            .post(format!("{}/render", self.base))
            .json(req)
            .send()
            .await?;
        Ok(Self::checked(resp).await?.bytes().await?.to_vec())
    }

    /// Opens a live session streaming frames in `format`.
    pub async fn connect(&self, format: FrameFormat) -> Result<Session> {
        let ws_base = self
            .base
            .replacen("https://", "wss://", 1)
            .replacen("http://", "ws://", 1);
        let fmt = match format {
            FrameFormat::Png => "png",
            FrameFormat::Raw => "raw",
        };
        let (ws, _) = connect_async(format!("{ws_base}/ws?format={fmt}")).await?;
        Ok(Session { ws })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Incoming {
    Frame(FramePayload),
    Message(ServerMessage),
}

pub struct Session {
    ws: WebSocketStream<MaybeTlsStream<tokio::net::TcpStream>>,
}

impl Session {
    pub async fn send_state(&mut self, state: &StateMessage) -> Result<()> {
        let text = serde_json::to_string(&ClientMessage::State(state.clone()))?;
        self.send_text(text).await
    }

    /// Sends an arbitrary text message.
    pub async fn send_text(&mut self, text: impl Into<String>) -> Result<()> {
        self.ws.send(Message::text(text.into())).await?;
        Ok(())
    }

    /// Next frame or JSON message; `None` once the service closes the session.
    pub async fn next(&mut self) -> Option<Result<Incoming>> {
        loop {
            let msg = match self.ws.next().await? {
                Ok(m) => m,
                Err(e) => return Some(Err(e.into())),
            };
            return Some(match msg {
                Message::Binary(b) => FramePayload::decode(&b).map(Incoming::Frame).map_err(Into::into),
                Message::Text(t) => serde_json::from_str(t.as_str()).map(Incoming::Message).map_err(Into::into),
                Message::Close(_) => return None,
                _ => continue,
            });
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
