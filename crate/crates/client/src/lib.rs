//! Thin async client for the locoman service.

use futures_util::{SinkExt, StreamExt};
use locoman_protocol::{ApiError, ClientMessage, RunRequest, RunResponse, ServerMessage, SessionState, StateMessage};
use serde::de::DeserializeOwned;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("bad reply: {0}")]
    Decode(#[from] serde_json::Error),
    /// The service answered with an error body.
    #[error("service error ({status}): {}", .body.error)]
    Api { status: u16, body: ApiError },
    #[error("connection closed")]
    Closed,
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { http: reqwest::Client::new(), base: base.into().trim_end_matches('/').to_string() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return Ok(serde_json::from_slice(&bytes)?);
        }
        let body: ApiError = serde_json::from_slice(&bytes)?;
        Err(ClientError::Api { status: status.as_u16(), body })
    }

    pub async fn run(&self, req: &RunRequest) -> Result<RunResponse> {
        let resp = self.http.post(format!("{}/run", self.base)).json(req).send().await?;
        Self::decode(resp).await
    }

    pub async fn state(&self) -> Result<StateMessage> {
        Self::decode(self.http.get(format!("{}/state", self.base)).send().await?).await
    }

    pub async fn session(&self) -> Result<SessionState> {
        Self::decode(self.http.get(format!("{}/session", self.base)).send().await?).await
    }

    pub async fn scenarios(&self) -> Result<Vec<String>> {
        Self::decode(self.http.get(format!("{}/scenarios", self.base)).send().await?).await
    }

    /// Sends one command over HTTP. Rejections come back as
    /// [`ServerMessage::Error`], not as `Err`.
    pub async fn command(&self, msg: &ClientMessage) -> Result<ServerMessage> {
        let resp = self.http.post(format!("{}/command", self.base)).json(msg).send().await?;
        Ok(serde_json::from_slice(&resp.bytes().await?)?)
    }

    pub async fn connect(&self) -> Result<Socket> {
        let url = format!("{}/ws", self.base.replacen("http", "ws", 1));
        let (ws, _) = tokio_tungstenite::connect_async(url).await?;
        Ok(Socket { ws })
    }
}

/// Live bridge connection.
pub struct Socket {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl Socket {
    pub async fn send(&mut self, msg: &ClientMessage) -> Result<()> {
        self.send_text(serde_json::to_string(msg)?).await
    }

    /// Sends raw text, valid or not.
    pub async fn send_text(&mut self, text: impl Into<String>) -> Result<()> {
        self.ws.send(Message::text(text.into())).await?;
        Ok(())
    }

    /// Next message from the server, state broadcasts included.
    pub async fn next(&mut self) -> Result<ServerMessage> {
        loop {
            match self.ws.next().await {
                Some(Ok(Message::Text(t))) => return Ok(serde_json::from_str(&t)?),
                Some(Ok(Message::Close(_))) | None => return Err(ClientError::Closed),
                Some(Ok(_)) => continue,
                Some(Err(e)) => return Err(e.into()),
            }
        }
    }

    /// Next ack or error, skipping state broadcasts.
    pub async fn reply(&mut self) -> Result<ServerMessage> {
        loop {
            match self.next().await? {
                ServerMessage::State(_) => continue,
                other => return Ok(other),
            }
        }
    }

    /// Next state broadcast, skipping replies.
    pub async fn next_state(&mut self) -> Result<StateMessage> {
        loop {
            if let ServerMessage::State(s) = self.next().await? {
                return Ok(s);
            }
        }
    }

    pub async fn close(mut self) -> Result<()> {
        self.ws.close(None).await?;
        Ok(())
    }
}
