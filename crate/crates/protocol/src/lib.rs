//! JSON messages exchanged with the bridge, over WebSocket and HTTP.
//!
//! Every message carries a version field `v` and a `type` tag. Quaternions are
//! `[w, x, y, z]`; wrenches are `[fx, fy, fz, τx, τy, τz]`.

use locoman_core::interface::{Button, MotionMode, Priority};
use locoman_core::sim::{RunReport, Snapshot};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

/// Force magnitude beyond which client wrenches are scaled down [N].
pub const MAX_FORCE: f64 = 200.0;
/// Torque magnitude beyond which client wrenches are scaled down [N·m].
pub const MAX_TORQUE: f64 = 20.0;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {got}, expected {PROTOCOL_VERSION}")]
    Version { got: u32 },
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Wrench { v: u32, f: [f64; 3], tau: [f64; 3] },
    Button { v: u32, id: Button },
    Reset { v: u32 },
    /// Replace the running scenario with a built-in one.
    Load { v: u32, name: String },
    Pause { v: u32 },
    Resume { v: u32 },
}

impl ClientMessage {
    pub fn version(&self) -> u32 {
        match self {
            ClientMessage::Wrench { v, .. }
            | ClientMessage::Button { v, .. }
            | ClientMessage::Reset { v }
            | ClientMessage::Load { v, .. }
            | ClientMessage::Pause { v }
            | ClientMessage::Resume { v } => *v,
        }
    }

    pub fn wrench(f: [f64; 3], tau: [f64; 3]) -> Self {
        ClientMessage::Wrench { v: PROTOCOL_VERSION, f, tau }
    }

    pub fn button(id: Button) -> Self {
        ClientMessage::Button { v: PROTOCOL_VERSION, id }
    }

    pub fn reset() -> Self {
        ClientMessage::Reset { v: PROTOCOL_VERSION }
    }

    pub fn load(name: impl Into<String>) -> Self {
        ClientMessage::Load { v: PROTOCOL_VERSION, name: name.into() }
    }

    pub fn pause() -> Self {
        ClientMessage::Pause { v: PROTOCOL_VERSION }
    }

    pub fn resume() -> Self {
        ClientMessage::Resume { v: PROTOCOL_VERSION }
    }

    /// Parses and checks version and finiteness. Wrenches come back clamped.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        msg.checked()
    }

    pub fn checked(self) -> Result<Self, ProtocolError> {
        if self.version() != PROTOCOL_VERSION {
            return Err(ProtocolError::Version { got: self.version() });
        }
        match self {
            ClientMessage::Wrench { v, f, tau } => {
                if !f.iter().all(|x| x.is_finite()) {
                    return Err(ProtocolError::NonFinite("f"));
                }
                if !tau.iter().all(|x| x.is_finite()) {
                    return Err(ProtocolError::NonFinite("tau"));
                }
                Ok(ClientMessage::Wrench { v, f: clamp_norm(f, MAX_FORCE), tau: clamp_norm(tau, MAX_TORQUE) })
            }
            other => Ok(other),
        }
    }
}

/// Scales `x` down to norm `limit` if it is longer, keeping its direction.
pub fn clamp_norm(x: [f64; 3], limit: f64) -> [f64; 3] {
    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if n <= limit {
        return x;
    }
    let s = limit / n;
    [x[0] * s, x[1] * s, x[2] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EePose {
    pub p: [f64; 3],
    pub quat: [f64; 4],
}

/// Lamp states. `m` is on in roto-translation, `p` in locomotion priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFlags {
    pub a: bool,
    pub m: bool,
    pub g: bool,
    pub p: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub v: u32,
    pub t: f64,
    pub tick: u64,
    pub q: Vec<f64>,
    pub ee: EePose,
    pub f_human: [f64; 6],
    pub f_ext: [f64; 6],
    pub mode: ModeFlags,
    pub robot: String,
    pub safety_stop: bool,
}

impl From<&Snapshot> for StateMessage {
    fn from(s: &Snapshot) -> Self {
        let q = s.ee.orientation.quaternion();
        let six = |w: &locoman_core::spatial::Wrench| {
            let v = w.to_vector();
            [v[0], v[1], v[2], v[3], v[4], v[5]]
        };
        StateMessage {
            v: PROTOCOL_VERSION,
            t: s.t,
            tick: s.tick,
            q: s.q.iter().copied().collect(),
            ee: EePose { p: s.ee.position.into(), quat: [q.w, q.i, q.j, q.k] },
            f_human: six(&s.f_human),
            f_ext: six(&s.f_ext),
            mode: ModeFlags {
                a: s.interface.admittance_active,
                m: s.interface.motion_mode == MotionMode::RotoTranslation,
                g: s.interface.gripper_closed,
                p: s.interface.priority == Priority::Locomotion,
            },
            robot: s.robot.clone(),
            safety_stop: s.safety_stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    State(StateMessage),
    /// The command took effect at controller tick `tick`.
    Ack { v: u32, tick: u64 },
    Error { v: u32, msg: String },
}

impl ServerMessage {
    pub fn ack(tick: u64) -> Self {
        ServerMessage::Ack { v: PROTOCOL_VERSION, tick }
    }

    pub fn error(msg: impl Into<String>) -> Self {
        ServerMessage::Error { v: PROTOCOL_VERSION, msg: msg.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub scenario: String,
    pub paused: bool,
    pub t: f64,
    pub tick: u64,
    pub clients: usize,
    pub queue_depth: usize,
    /// Last integration fault, after which the session stays paused until reset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

/// Body of `POST /run`. Exactly one of `scenario` (built-in name) and `config`
/// (TOML text) must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub report: RunReport,
    /// Effective configuration as TOML.
    pub config: String,
    /// Full log as CSV.
    pub csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Validation,
    Integration,
    Internal,
}

/// Error body returned by the HTTP endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: FailureKind,
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_round_trip() {
        for m in [
            ClientMessage::wrench([1.0, 2.0, 3.0], [0.0; 3]),
            ClientMessage::button(Button::G),
            ClientMessage::reset(),
            ClientMessage::load("load_carry"),
            ClientMessage::pause(),
            ClientMessage::resume(),
        ] {
            let text = serde_json::to_string(&m).unwrap();
            assert_eq!(ClientMessage::parse(&text).unwrap(), m);
        }
    }

    #[test]
    fn wire_shapes() {
        let m = ClientMessage::parse(r#"{"v":1,"type":"button","id":"A"}"#).unwrap();
        assert_eq!(m, ClientMessage::button(Button::A));
        let ack = ServerMessage::ack(12).to_json();
        assert_eq!(ack, r#"{"type":"ack","v":1,"tick":12}"#);
    }

    #[test]
    fn large_wrenches_are_clamped() {
        let m = ClientMessage::parse(r#"{"v":1,"type":"wrench","f":[300,400,0],"tau":[0,0,-50]}"#).unwrap();
        let ClientMessage::Wrench { f, tau, .. } = m else { panic!() };
        assert!((f[0] - 120.0).abs() < 1e-12 && (f[1] - 160.0).abs() < 1e-12);
        assert_eq!(tau, [0.0, 0.0, -20.0]);
    }

    #[test]
    fn bad_messages_are_rejected() {
        assert!(matches!(ClientMessage::parse("{"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(ClientMessage::parse(r#"{"v":1,"type":"button","id":"Z"}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(ClientMessage::parse(r#"{"v":2,"type":"reset"}"#), Err(ProtocolError::Version { got: 2 })));
        assert!(matches!(
            ClientMessage::wrench([f64::NAN, 0.0, 0.0], [0.0; 3]).checked(),
            Err(ProtocolError::NonFinite("f"))
        ));
    }
}
