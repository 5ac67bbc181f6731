//! Deterministic simulator for the two controllers.

pub mod config;
pub mod contact;
pub mod log;
pub mod world;

use serde::{Deserialize, Serialize};

pub use config::{ControllerKind, ScenarioConfig};
pub use contact::{contact_wrench, ContactState, Wall};
pub use log::{Record, SimLog, Table};
pub use world::{Snapshot, World};

use crate::error::{Error, Result};
use crate::interface::Priority;

const BUILTIN: [(&str, &str); 6] = [
    ("free_space", include_str!("../../../../scenarios/free_space.cfg")),
    ("wall_insertion", include_str!("../../../../scenarios/wall_insertion.cfg")),
    ("load_carry", include_str!("../../../../scenarios/load_carry.cfg")),
    ("path_track", include_str!("../../../../scenarios/path_track.cfg")),
    ("posture_traverse", include_str!("../../../../scenarios/posture_traverse.cfg")),
    ("singularity_pass", include_str!("../../../../scenarios/singularity_pass.cfg")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let src = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{name}`; built-ins: {}", builtin_names().join(", "))))?;
    ScenarioConfig::from_toml_str(src)
}

/// Runs a scenario headless from `t = 0` to `duration`, one record per
/// controller tick, both ends included.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimLog> {
    let mut world = World::new(cfg)?;
    let ticks = (cfg.duration / world.tick_period()).round() as u64;
    let mut log = SimLog::new(world.meta());
    log.records.reserve(ticks as usize + 1);
    for _ in 0..ticks {
        log.records.push(world.tick()?);
    }
    log.records.push(world.observe()?);
    Ok(log)
}

/// Summary of a run, recomputable from its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub robot: String,
    /// Simulated time covered by the log [s].
    pub duration: f64,
    pub completed: bool,
    pub safety_stop: bool,
    /// Largest `‖f_ext‖` over the log [N].
    pub peak_f_ext: f64,
    /// RMS end-effector position error `‖x − x_d‖` [m].
    pub rms_tracking_error: f64,
    /// Number of manipulation/locomotion priority switches.
    pub mode_switches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<String>,
    pub config_hash: String,
    pub version: String,
}

impl RunReport {
    pub fn from_log(log: &SimLog) -> RunReport {
        let recs = &log.records;
        let safety_stop = recs.iter().any(|r| r.safety_stop);
        let peak = recs.iter().map(|r| r.f_ext.norm()).fold(0.0, f64::max);
        let sq: f64 = recs.iter().map(|r| (r.x.position - r.x_d.position).norm_squared()).sum();
        let rms = if recs.is_empty() { 0.0 } else { (sq / recs.len() as f64).sqrt() };
        RunReport {
            scenario: log.meta.scenario.clone(),
            robot: log.meta.robot.clone(),
            duration: recs.last().map_or(0.0, |r| r.t),
            completed: !safety_stop,
            safety_stop,
            peak_f_ext: peak,
            rms_tracking_error: rms,
            mode_switches: priority_sequence(log).len().saturating_sub(1),
            log_path: None,
            config_hash: log.meta.config_hash.clone(),
            version: log.meta.version.clone(),
        }
    }
}

/// Priority modes in the order they occur, consecutive duplicates collapsed.
pub fn priority_sequence(log: &SimLog) -> Vec<Priority> {
    let mut seq: Vec<Priority> = Vec::new();
    for r in &log.records {
        if seq.last() != Some(&r.priority) {
            seq.push(r.priority);
        }
    }
    seq
}
