//! HTTP/JSON and WebSocket front end for the simulator.
//!
//! | route            | method | body / reply                                  |
//! |------------------|--------|-----------------------------------------------|
//! | `/ws`            | GET    | WebSocket bridge, see `locoman-protocol`      |
//! | `/state`         | GET    | latest `StateMessage`                         |
//! | `/session`       | GET    | `SessionState`                                |
//! | `/command`       | POST   | one `ClientMessage`, answered with ack/error  |
//! | `/scenarios`     | GET    | built-in scenario names                       |
//! | `/run`           | POST   | `RunRequest` → `RunResponse` (headless run)   |

mod error;
mod session;

use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use locoman_core::sim::{self, RunReport, ScenarioConfig};
use locoman_protocol::{ApiError, ClientMessage, FailureKind, RunRequest, RunResponse, ServerMessage};
use tokio::net::TcpListener;
use tokio::time::MissedTickBehavior;

pub use error::{Result, ServerError};
pub use session::{Session, SessionConfig};

pub fn router(session: Session) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/state", get(state))
        .route("/session", get(session_state))
        .route("/command", post(command))
        .route("/scenarios", get(scenarios))
        .route("/run", post(run))
        .with_state(session)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, session: Session) -> Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(session)).await?;
    Ok(())
}

/// Scenario for a `POST /run` request, overrides applied and validated.
pub fn resolve_run(req: &RunRequest) -> locoman_core::Result<ScenarioConfig> {
    let base = match (&req.scenario, &req.config) {
        (Some(name), None) => sim::builtin_scenario(name)?,
        (None, Some(text)) => ScenarioConfig::from_toml_str(text)?,
        _ => {
            return Err(locoman_core::Error::Config {
                path: "request".into(),
                msg: "give exactly one of `scenario` and `config`".into(),
            })
        }
    };
    let cfg = base.with_overrides(&req.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn api_error(status: StatusCode, kind: FailureKind, error: impl ToString) -> Response {
    (status, Json(ApiError { kind, error: error.to_string() })).into_response()
}

async fn state(State(s): State<Session>) -> Response {
    Json(s.state()).into_response()
}

async fn session_state(State(s): State<Session>) -> Response {
    Json(s.session_state()).into_response()
}

async fn scenarios() -> Response {
    Json(sim::builtin_names()).into_response()
}

async fn command(State(s): State<Session>, body: String) -> Response {
    let reply = match ClientMessage::parse(&body) {
        Ok(msg) => s.command(msg).await,
        Err(e) => ServerMessage::error(e.to_string()),
    };
    let status = match reply {
        ServerMessage::Error { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::OK,
    };
    (status, Json(reply)).into_response()
}

async fn run(Json(req): Json<RunRequest>) -> Response {
    let cfg = match resolve_run(&req) {
        Ok(c) => c,
        Err(e) => return api_error(StatusCode::UNPROCESSABLE_ENTITY, FailureKind::Validation, e),
    };
    let job = tokio::task::spawn_blocking(move || {
        sim::run_scenario(&cfg).map(|log| RunResponse {
            report: RunReport::from_log(&log),
            config: cfg.to_toml_string(),
            csv: log.to_csv_string(),
        })
    });
    match job.await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => api_error(StatusCode::INTERNAL_SERVER_ERROR, FailureKind::Integration, e),
        Err(e) => api_error(StatusCode::INTERNAL_SERVER_ERROR, FailureKind::Internal, e),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(s): State<Session>) -> Response {
    ws.on_upgrade(move |socket| client_loop(socket, s))
}

/// Per-client loop. States go out at the broadcast rate, always the latest one;
/// a slow client only delays itself.
async fn client_loop(socket: WebSocket, session: Session) {
    let _guard = session.join();
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = tokio::sync::mpsc::channel::<ServerMessage>(32);
    let mut states = session.subscribe();
    let period = Duration::from_secs_f64(1.0 / session.broadcast_hz);

    let writer = async move {
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
        loop {
            let msg = tokio::select! {
                _ = ticker.tick() => ServerMessage::State(states.borrow_and_update().state.clone()),
                m = reply_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
            };
            if sink.send(Message::Text(msg.to_json().into())).await.is_err() {
                break;
            }
        }
    };
    let commander = session.clone();
    let reader = async move {
        while let Some(Ok(frame)) = stream.next().await {
            let reply = match frame {
                Message::Text(text) => match ClientMessage::parse(&text) {
                    Ok(msg) => commander.command(msg).await,
                    Err(e) => ServerMessage::error(e.to_string()),
                },
                Message::Binary(_) => ServerMessage::error("binary frames are not supported"),
                Message::Close(_) => break,
                _ => continue,
            };
            if reply_tx.send(reply).await.is_err() {
                break;
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
}
