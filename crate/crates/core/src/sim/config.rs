//! Scenario configuration: a TOML document with every controller default
//! embedded, plus dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::STANDARD_GRAVITY;
use crate::error::{Error, Result};
use crate::interface::{AdmittanceParams, Button};
use crate::kairos::ClikGains;
use crate::moca::ImpedanceGains;
use crate::model::{home_configuration, RobotModel};

pub const MIN_DT: f64 = 1e-4;
pub const MAX_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Torque-level weighted impedance control.
    Moca,
    /// Velocity-level weighted inverse kinematics.
    Kairos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Built-in robot name (`moca-like`, `kairos-like`).
    pub robot: String,
    /// Model file replacing the built-in geometry; `robot` then only names it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_file: Option<PathBuf>,
    /// Simulated time [s].
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt_physics: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "enabled")]
    pub gravity: bool,
    #[serde(default = "standard_gravity")]
    pub gravity_constant: f64,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub admittance: AdmittanceParams,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub walls: Vec<WallConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<PayloadConfig>,
    #[serde(default)]
    pub profile: Vec<WrenchSegment>,
    #[serde(default)]
    pub events: Vec<ButtonEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

fn default_dt() -> f64 {
    MIN_DT
}

fn enabled() -> bool {
    true
}

fn standard_gravity() -> f64 {
    STANDARD_GRAVITY
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    /// Base `x` [m], `y` [m], yaw [rad].
    #[serde(default)]
    pub base: [f64; 3],
    /// Arm angles; the model's home configuration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Controller family; follows the robot when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ControllerKind>,
    pub moca_rate: f64,
    pub kairos_rate: f64,
    pub moca: ImpedanceGains,
    pub kairos: ClikGains,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            kind: None,
            moca_rate: 1000.0,
            kairos_rate: 500.0,
            moca: ImpedanceGains::default(),
            kairos: ClikGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Time constant of the base velocity tracking [s]; 0 tracks ideally.
    pub base_lag: f64,
    /// Time constant of the velocity-controlled arm joints [s]; 0 tracks ideally.
    pub joint_lag: f64,
    pub noise: NoiseConfig,
}

/// Gaussian noise on the measured human wrench.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Standard deviation per force axis [N].
    pub force_std: f64,
    /// Standard deviation per torque axis [N·m].
    pub torque_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallFrame {
    #[default]
    World,
    /// `point` is an offset from the initial end-effector position.
    InitialEe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub point: [f64; 3],
    /// Unit normal pointing out of the wall, towards free space.
    pub normal: [f64; 3],
    /// [N/m]
    pub stiffness: f64,
    /// [N·s/m]
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub frame: WallFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayloadTrigger {
    /// Attached while the gripper is closed.
    Gripper,
    /// Attached over a fixed time window.
    Scripted { attach: f64, detach: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadConfig {
    /// [kg]
    pub mass: f64,
    pub trigger: PayloadTrigger,
}

/// Human wrench held over `[t_start, t_end)`; overlapping segments add up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchSegment {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub torque: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButtonEvent {
    pub t: f64,
    pub button: Button,
}

/// Scripted end-effector target replacing the admittance output. Offsets are
/// relative to the initial end-effector position; orientation is held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reference {
    /// `a ⊙ (sin(2π f t + φ) − sin φ)`
    Lissajous {
        amplitude: [f64; 3],
        frequency: [f64; 3],
        #[serde(default)]
        phase: [f64; 3],
    },
    /// Constant velocity between `start` and `stop`.
    Line { velocity: [f64; 3], start: f64, stop: f64 },
}

impl ScenarioConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::config("scenario", e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml_str(&src)
    }

    /// Loads a file and applies `key=value` overrides before validation.
    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let cfg = Self::load(path)?;
        let cfg = cfg.with_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Effective configuration with every default spelled out.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Applies `a.b.c=value` overrides. The key must exist in the effective
    /// configuration, or name a new entry of an existing table. Values are parsed
    /// as TOML and fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::config("scenario", e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "override must look like key=value"))?;
            let key = key.trim();
            set_path(&mut doc, key, parse_value(raw.trim()))?;
        }
        let text = toml::to_string(&doc).map_err(|e| Error::config("scenario", e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn controller_kind(&self) -> Result<ControllerKind> {
        if let Some(kind) = self.controller.kind {
            return Ok(kind);
        }
        match self.robot.as_str() {
            "moca-like" => Ok(ControllerKind::Moca),
            "kairos-like" => Ok(ControllerKind::Kairos),
            other => Err(Error::config(
                "controller.kind",
                format!("cannot infer the controller for robot `{other}`"),
            )),
        }
    }

    pub fn controller_rate(&self) -> Result<f64> {
        Ok(match self.controller_kind()? {
            ControllerKind::Moca => self.controller.moca_rate,
            ControllerKind::Kairos => self.controller.kairos_rate,
        })
    }

    /// Physics steps per controller tick.
    pub fn steps_per_tick(&self) -> Result<u64> {
        let ratio = 1.0 / (self.controller_rate()? * self.dt_physics);
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-6 {
            return Err(Error::config(
                "dt_physics",
                format!("controller period is not a whole number of physics steps ({ratio})"),
            ));
        }
        Ok(steps as u64)
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        let model = match &self.model_file {
            Some(path) => RobotModel::load(path)?,
            None => RobotModel::builtin(&self.robot)
                .ok_or_else(|| Error::config("robot", format!("unknown robot `{}`", self.robot)))?,
        };
        model.validate_platform()?;
        Ok(model)
    }

    pub fn initial_arm(&self, model: &RobotModel) -> Result<Vec<f64>> {
        let arm = match &self.initial.arm {
            Some(a) => a.clone(),
            None => home_configuration(model),
        };
        if arm.len() != model.arm_dof() {
            return Err(Error::config(
                "initial.arm",
                format!("expected {} angles, got {}", model.arm_dof(), arm.len()),
            ));
        }
        Ok(arm)
    }

    pub fn gravity_magnitude(&self) -> f64 {
        if self.gravity {
            self.gravity_constant
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.duration) {
            return Err(Error::config("duration", "must be positive"));
        }
        if !(MIN_DT..=MAX_DT).contains(&self.dt_physics) {
            return Err(Error::config("dt_physics", format!("must lie in [{MIN_DT}, {MAX_DT}]")));
        }
        if !(self.gravity_constant >= 0.0) {
            return Err(Error::config("gravity_constant", "must be non-negative"));
        }
        for (name, rate) in [("controller.moca_rate", self.controller.moca_rate), ("controller.kairos_rate", self.controller.kairos_rate)] {
            if !(100.0..=1.0 / MIN_DT).contains(&rate) {
                return Err(Error::config(name, "must lie in [100, 10000] Hz"));
            }
        }
        self.steps_per_tick()?;
        let model = self.robot_model()?;
        self.initial_arm(&model)?;
        if self.initial.base.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("initial.base", "must be finite"));
        }
        self.controller.moca.validate()?;
        self.controller.kairos.validate()?;
        self.admittance.validate()?;
        if !(self.plant.base_lag >= 0.0) || !(self.plant.joint_lag >= 0.0) {
            return Err(Error::config("plant", "lags must be non-negative"));
        }
        let noise = &self.plant.noise;
        if !(noise.force_std >= 0.0 && noise.torque_std >= 0.0) {
            return Err(Error::config("plant.noise", "standard deviations must be non-negative"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            let n = w.normal;
            let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("walls[{i}].normal"), "must be a unit vector"));
            }
            if !(w.stiffness >= 0.0) || !(w.damping >= 0.0) {
                return Err(Error::config(format!("walls[{i}]"), "stiffness and damping must be non-negative"));
            }
        }
        if let Some(p) = &self.payload {
            if !(p.mass >= 0.0 && p.mass.is_finite()) {
                return Err(Error::config("payload.mass", "must be non-negative"));
            }
            if let PayloadTrigger::Scripted { attach, detach } = p.trigger {
                if detach.is_some_and(|d| d <= attach) {
                    return Err(Error::config("payload.trigger", "detach must come after attach"));
                }
            }
        }
        for (i, s) in self.profile.iter().enumerate() {
            if !(s.t_start >= 0.0 && s.t_end > s.t_start) {
                return Err(Error::config(format!("profile[{i}]"), "needs 0 <= t_start < t_end"));
            }
            if s.force.iter().chain(&s.torque).any(|v| !v.is_finite()) {
                return Err(Error::config(format!("profile[{i}]"), "wrench must be finite"));
            }
        }
        for (i, pair) in self.events.windows(2).enumerate() {
            if pair[1].t < pair[0].t {
                return Err(Error::config(format!("events[{}]", i + 1), "events must be sorted by time"));
            }
        }
        if self.events.iter().any(|e| !(e.t >= 0.0)) {
            return Err(Error::config("events", "times must be non-negative"));
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let mut cur = doc;
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*part)
                    .ok_or_else(|| Error::config(key, format!("unknown key `{}`", parts[..=depth].join("."))))?
            }
            toml::Value::Array(a) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(key, format!("index {idx} out of range ({len} entries)")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(key, format!("`{}` is not a table", parts[..depth].join(".")))),
        };
    }
    unreachable!("loop returns on the last segment")
}
