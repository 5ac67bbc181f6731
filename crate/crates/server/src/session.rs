//! One live simulation paced to the wall clock.
//!
//! A dedicated thread owns the [`World`]. Commands arrive over an ordered
//! queue and are applied between controller ticks; the latest state is
//! published on a watch channel that readers sample at their own pace.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use locoman_core::sim::{self, ScenarioConfig, World};
use locoman_core::spatial::Wrench;
use locoman_protocol::{ClientMessage, ServerMessage, SessionState, StateMessage};
use nalgebra::Vector3;
use tokio::sync::{oneshot, watch};

use crate::error::{Result, ServerError};

/// Wall-clock lag after which the pacer gives up catching up and re-anchors.
const MAX_LAG: Duration = Duration::from_millis(100);
/// Longest the sim thread sleeps while paused or idle.
const IDLE_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scenario: ScenarioConfig,
    /// Operator wrench is zeroed when no message arrives for this long.
    pub watchdog: Duration,
    /// State broadcast rate per WebSocket client [Hz].
    pub broadcast_hz: f64,
}

impl SessionConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self { scenario, watchdog: Duration::from_secs(1), broadcast_hz: 50.0 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Published {
    pub state: StateMessage,
    pub scenario: String,
    pub paused: bool,
    pub fault: Option<String>,
}

struct Envelope {
    msg: ClientMessage,
    reply: oneshot::Sender<ServerMessage>,
}

/// Cheap handle to a running session. The sim thread stops once every handle
/// is dropped.
#[derive(Clone)]
pub struct Session {
    tx: mpsc::Sender<Envelope>,
    state: watch::Receiver<Arc<Published>>,
    clients: Arc<AtomicUsize>,
    depth: Arc<AtomicUsize>,
    pub(crate) broadcast_hz: f64,
}

impl Session {
    pub fn spawn(cfg: SessionConfig) -> Result<Session> {
        cfg.scenario.validate()?;
        let world = World::new(&cfg.scenario)?;
        let first = publish(&world, false, None);
        let (state_tx, state) = watch::channel(Arc::new(first));
        let (tx, rx) = mpsc::channel();
        let depth = Arc::new(AtomicUsize::new(0));
        let runner = Runner {
            world,
            cfg: cfg.scenario.clone(),
            watchdog: cfg.watchdog,
            rx,
            out: state_tx,
            depth: depth.clone(),
            paused: false,
            fault: None,
            last_input: Instant::now(),
        };
        thread::Builder::new()
            .name("locoman-sim".into())
            .spawn(move || runner.run())
            .map_err(ServerError::Io)?;
        Ok(Session { tx, state, clients: Arc::new(AtomicUsize::new(0)), depth, broadcast_hz: cfg.broadcast_hz })
    }

    /// Queues a command and waits for the tick at which it took effect.
    pub async fn command(&self, msg: ClientMessage) -> ServerMessage {
        let (reply, rx) = oneshot::channel();
        self.depth.fetch_add(1, Ordering::SeqCst);
        if self.tx.send(Envelope { msg, reply }).is_err() {
            self.depth.fetch_sub(1, Ordering::SeqCst);
            return ServerMessage::error("simulation stopped");
        }
        rx.await.unwrap_or_else(|_| ServerMessage::error("simulation stopped"))
    }

    pub fn state(&self) -> StateMessage {
        self.state.borrow().state.clone()
    }

    pub fn session_state(&self) -> SessionState {
        let p = self.state.borrow().clone();
        SessionState {
            scenario: p.scenario.clone(),
            paused: p.paused,
            t: p.state.t,
            tick: p.state.tick,
            clients: self.clients.load(Ordering::SeqCst),
            queue_depth: self.depth.load(Ordering::SeqCst),
            fault: p.fault.clone(),
        }
    }

    pub(crate) fn subscribe(&self) -> watch::Receiver<Arc<Published>> {
        self.state.clone()
    }

    /// Counts a connected client until the guard drops.
    pub(crate) fn join(&self) -> ClientGuard {
        self.clients.fetch_add(1, Ordering::SeqCst);
        ClientGuard(self.clients.clone())
    }
}

pub(crate) struct ClientGuard(Arc<AtomicUsize>);

impl Drop for ClientGuard {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn publish(world: &World, paused: bool, fault: Option<String>) -> Published {
    Published {
        state: StateMessage::from(&world.snapshot()),
        scenario: world.config().name.clone(),
        paused,
        fault,
    }
}

struct Runner {
    world: World,
    cfg: ScenarioConfig,
    watchdog: Duration,
    rx: mpsc::Receiver<Envelope>,
    out: watch::Sender<Arc<Published>>,
    depth: Arc<AtomicUsize>,
    paused: bool,
    fault: Option<String>,
    last_input: Instant,
}

impl Runner {
    fn run(mut self) {
        let period = Duration::from_secs_f64(self.world.tick_period());
        let mut anchor = Instant::now();
        let mut anchor_tick = self.world.tick_count();
        loop {
            let running = !self.paused && self.fault.is_none();
            let wait = if running {
                let due = anchor + period.mul_f64((self.world.tick_count() - anchor_tick + 1) as f64);
                due.saturating_duration_since(Instant::now())
            } else {
                IDLE_POLL
            };
            let mut reanchor = false;
            if !wait.is_zero() {
                self.out.send_replace(Arc::new(publish(&self.world, self.paused, self.fault.clone())));
                match self.rx.recv_timeout(wait) {
                    Ok(env) => reanchor |= self.apply(env),
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => return,
                }
            }
            loop {
                match self.rx.try_recv() {
                    Ok(env) => reanchor |= self.apply(env),
                    Err(mpsc::TryRecvError::Empty) => break,
                    Err(mpsc::TryRecvError::Disconnected) => return,
                }
            }
            if self.last_input.elapsed() > self.watchdog && self.world.external_wrench() != Wrench::zero() {
                tracing::debug!("watchdog expired, zeroing operator wrench");
                self.world.set_external_wrench(Wrench::zero());
            }
            if reanchor {
                anchor = Instant::now();
                anchor_tick = self.world.tick_count();
                continue;
            }
            if self.paused || self.fault.is_some() {
                continue;
            }
            let due_at = anchor + period.mul_f64((self.world.tick_count() - anchor_tick + 1) as f64);
            let now = Instant::now();
            if now < due_at {
                continue;
            }
            if now - due_at > MAX_LAG {
                tracing::warn!(lag_ms = (now - due_at).as_millis() as u64, "simulation behind wall clock, re-anchoring");
                anchor = now;
                anchor_tick = self.world.tick_count();
            }
            if let Err(e) = self.world.tick() {
                tracing::error!(error = %e, "simulation fault");
                self.fault = Some(e.to_string());
            }
        }
    }

    /// Applies one command and answers it. Returns true when the pacing anchor
    /// must be reset.
    fn apply(&mut self, env: Envelope) -> bool {
        self.depth.fetch_sub(1, Ordering::SeqCst);
        self.last_input = Instant::now();
        let tick = self.world.tick_count();
        let (reply, reanchor) = match env.msg {
            ClientMessage::Wrench { f, tau, .. } => {
                self.world.set_external_wrench(Wrench::new(Vector3::from(f), Vector3::from(tau)));
                (ServerMessage::ack(tick), false)
            }
            ClientMessage::Button { id, .. } => {
                self.world.press(id);
                (ServerMessage::ack(tick), false)
            }
            ClientMessage::Reset { .. } => match World::new(&self.cfg) {
                Ok(w) => {
                    self.world = w;
                    self.fault = None;
                    (ServerMessage::ack(0), true)
                }
                Err(e) => (ServerMessage::error(e.to_string()), false),
            },
            ClientMessage::Load { name, .. } => {
                match sim::builtin_scenario(&name).and_then(|c| c.validate().map(|_| c)).and_then(|c| Ok((World::new(&c)?, c))) {
                    Ok((w, c)) => {
                        self.world = w;
                        self.cfg = c;
                        self.fault = None;
                        (ServerMessage::ack(0), true)
                    }
                    Err(e) => (ServerMessage::error(e.to_string()), false),
                }
            }
            ClientMessage::Pause { .. } => {
                self.paused = true;
                (ServerMessage::ack(tick), false)
            }
            ClientMessage::Resume { .. } => {
                let was = self.paused;
                self.paused = false;
                (ServerMessage::ack(tick), was)
            }
        };
        let _ = env.reply.send(reply);
        if reanchor {
            self.out.send_replace(Arc::new(publish(&self.world, self.paused, self.fault.clone())));
        }
        reanchor
    }
}
