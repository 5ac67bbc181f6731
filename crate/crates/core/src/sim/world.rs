//! Fixed-step world: plant integration, controller sub-sampling, contact,
//! payload and the safety latch.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::interface::{Button, InterfaceState};
use crate::kairos::clik_step;
use crate::moca::{base_torque_to_velocity, moca_step};
use crate::model::{JointState, RobotModel, BASE_DOF};
use crate::spatial::{Pose, Twist, Wrench};

use super::config::{ControllerKind, PayloadTrigger, Reference, ScenarioConfig, WallFrame};
use super::contact::{contact_wrench, ContactState, Wall};
use super::log::{Diagnostics, LogMeta, Record};

/// Joint accelerations `M⁻¹ (τ − b)`.
pub fn arm_acceleration(mass: &DMatrix<f64>, bias: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = mass
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("arm mass matrix"))?;
    Ok(chol.solve(&(tau - bias)))
}

/// One kick-drift-kick step: half a velocity update, a full position update with
/// the half-step velocity, then the second half velocity update at the new
/// position. The closing kick evaluates the velocity-dependent terms at the
/// predicted end-of-step velocity. `accel(q, q̇)` returns the joint accelerations.
pub fn integrate_arm<F>(mut accel: F, q_a: &mut [f64], dq_a: &mut [f64], dt: f64) -> Result<()>
where
    F: FnMut(&[f64], &[f64]) -> Result<DVector<f64>>,
{
    let a0 = accel(q_a, dq_a)?;
    for i in 0..q_a.len() {
        dq_a[i] += 0.5 * dt * a0[i];
        q_a[i] += dt * dq_a[i];
    }
    let predicted: Vec<f64> = dq_a.iter().zip(a0.iter()).map(|(v, a)| v + 0.5 * dt * a).collect();
    let a1 = accel(q_a, &predicted)?;
    for i in 0..q_a.len() {
        dq_a[i] += 0.5 * dt * a1[i];
    }
    Ok(())
}

/// Total energy of the unactuated arm (kinetic plus potential, heights from the
/// floor) sampled every step while it moves freely from `(q0, dq0)`.
pub fn free_arm_energy(
    model: &RobotModel,
    q0: &[f64],
    dq0: &[f64],
    gravity: f64,
    dt: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mount_height = model.mount().translation.vector.z;
    let energy = |q: &[f64], dq: &[f64]| -> Result<f64> {
        Ok(dynamics::arm_kinetic_energy(model, q, dq)?
            + dynamics::arm_potential_energy(model, q, gravity)?
            + model.total_arm_mass() * gravity * mount_height)
    };
    let mut q = q0.to_vec();
    let mut dq = dq0.to_vec();
    let zero = DVector::zeros(q.len());
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(energy(&q, &dq)?);
    for _ in 0..steps {
        integrate_arm(
            |q, dq| {
                let (m, b) = dynamics::arm_mass_and_bias(model, q, dq, gravity)?;
                arm_acceleration(&m, &b, &zero)
            },
            &mut q,
            &mut dq,
            dt,
        )?;
        trace.push(energy(&q, &dq)?);
    }
    Ok(trace)
}

/// Snapshot of the quantities a remote viewer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub tick: u64,
    pub q: DVector<f64>,
    pub ee: Pose,
    pub f_human: Wrench,
    pub f_ext: Wrench,
    pub interface: InterfaceState,
    pub robot: String,
    pub safety_stop: bool,
}

pub struct World {
    cfg: ScenarioConfig,
    kind: ControllerKind,
    model: RobotModel,
    plant_model: RobotModel,
    gravity: f64,
    walls: Vec<Wall>,
    dt: f64,
    steps_per_tick: u64,
    step: u64,
    state: JointState,
    interface: InterfaceState,
    x0: Pose,
    /// Output of the base admittance `M_v q̈_b + D_v q̇_b = τ_v`.
    base_cmd: [f64; 3],
    arm_torque: DVector<f64>,
    velocity_cmd: DVector<f64>,
    command: DVector<f64>,
    human: Wrench,
    external: Wrench,
    f_ext: Wrench,
    contact: ContactState,
    /// Wrench used by the first plant step of the latest tick.
    injected: Option<Wrench>,
    payload_attached: bool,
    safety_stop: bool,
    next_event: usize,
    pending: VecDeque<Button>,
    rng: ChaCha8Rng,
    diagnostics: Diagnostics,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Result<World> {
        cfg.validate()?;
        let model = cfg.robot_model()?;
        let kind = cfg.controller_kind()?;
        let arm = cfg.initial_arm(&model)?;
        let state = JointState::from_parts(cfg.initial.base, &arm);
        let x0 = model.forward_kinematics(&state)?;
        let walls = cfg
            .walls
            .iter()
            .map(|w| {
                let offset = match w.frame {
                    WallFrame::World => Vector3::zeros(),
                    WallFrame::InitialEe => x0.position,
                };
                Wall {
                    point: offset + Vector3::from(w.point),
                    normal: Vector3::from(w.normal),
                    stiffness: w.stiffness,
                    damping: w.damping,
                }
            })
            .collect();
        let n = model.dof();
        Ok(World {
            cfg: cfg.clone(),
            kind,
            plant_model: model.clone(),
            gravity: cfg.gravity_magnitude(),
            walls,
            dt: cfg.dt_physics,
            steps_per_tick: cfg.steps_per_tick()?,
            step: 0,
            interface: InterfaceState::new(x0, &state),
            state,
            x0,
            base_cmd: [0.0; 3],
            arm_torque: DVector::zeros(model.arm_dof()),
            velocity_cmd: DVector::zeros(n),
            command: DVector::zeros(n),
            human: Wrench::zero(),
            external: Wrench::zero(),
            f_ext: Wrench::zero(),
            contact: ContactState::default(),
            injected: None,
            payload_attached: false,
            safety_stop: false,
            next_event: 0,
            pending: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            diagnostics: Diagnostics::default(),
            model,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Controller ticks elapsed.
    pub fn tick_count(&self) -> u64 {
        self.step / self.steps_per_tick
    }

    pub fn tick_period(&self) -> f64 {
        self.dt * self.steps_per_tick as f64
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn interface(&self) -> &InterfaceState {
        &self.interface
    }

    pub fn f_ext(&self) -> &Wrench {
        &self.f_ext
    }

    pub fn contact(&self) -> &ContactState {
        &self.contact
    }

    /// External wrench the plant received at the first physics step of the
    /// latest tick; `None` when the plant was frozen.
    pub fn injected_wrench(&self) -> Option<Wrench> {
        self.injected
    }

    pub fn safety_stop(&self) -> bool {
        self.safety_stop
    }

    pub fn meta(&self) -> LogMeta {
        LogMeta {
            scenario: self.cfg.name.clone(),
            robot: self.cfg.robot.clone(),
            dof: self.model.dof(),
            dt: self.tick_period(),
            config_hash: self.cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Human wrench added on top of the scripted profile, held until replaced.
    pub fn set_external_wrench(&mut self, w: Wrench) {
        self.external = w;
    }

    pub fn external_wrench(&self) -> Wrench {
        self.external
    }

    /// Queues a button press for the next controller tick.
    pub fn press(&mut self, button: Button) {
        self.pending.push_back(button);
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.time(),
            tick: self.tick_count(),
            q: self.state.q.clone(),
            ee: self.model.forward_kinematics(&self.state).expect("state matches model"),
            f_human: self.human,
            f_ext: self.f_ext,
            interface: self.interface.clone(),
            robot: self.cfg.robot.clone(),
            safety_stop: self.safety_stop,
        }
    }

    fn profile_wrench(&self, t: f64) -> Wrench {
        let mut w = Wrench::zero();
        for s in &self.cfg.profile {
            if t >= s.t_start && t < s.t_end {
                w = w + Wrench::new(Vector3::from(s.force), Vector3::from(s.torque));
            }
        }
        w
    }

    fn noise(&mut self) -> Wrench {
        let n = &self.cfg.plant.noise;
        if !n.enabled {
            return Wrench::zero();
        }
        let f = Normal::new(0.0, n.force_std).expect("validated std");
        let tq = Normal::new(0.0, n.torque_std).expect("validated std");
        let rng = &mut self.rng;
        let lin = Vector3::from_fn(|_, _| f.sample(rng));
        let ang = Vector3::from_fn(|_, _| tq.sample(rng));
        Wrench::new(lin, ang)
    }

    fn payload_mass(&self) -> f64 {
        self.cfg.payload.as_ref().map_or(0.0, |p| p.mass)
    }

    fn update_payload(&mut self, t: f64) {
        let Some(p) = &self.cfg.payload else { return };
        let attached = match p.trigger {
            PayloadTrigger::Gripper => self.interface.gripper_closed,
            PayloadTrigger::Scripted { attach, detach } => t >= attach && detach.is_none_or(|d| t < d),
        };
        if attached != self.payload_attached {
            self.payload_attached = attached;
            self.plant_model = if attached {
                self.model.with_tool_payload(p.mass)
            } else {
                self.model.clone()
            };
        }
    }

    fn payload_wrench(&self) -> Wrench {
        if self.payload_attached {
            Wrench::new(Vector3::new(0.0, 0.0, -self.payload_mass() * self.gravity), Vector3::zeros())
        } else {
            Wrench::zero()
        }
    }

    fn reference(&self, r: &Reference, t: f64) -> (Pose, Twist) {
        let (off, vel) = match r {
            Reference::Lissajous { amplitude, frequency, phase } => {
                let off = Vector3::from_fn(|i, _| {
                    amplitude[i] * ((TAU * frequency[i] * t + phase[i]).sin() - phase[i].sin())
                });
                let vel = Vector3::from_fn(|i, _| amplitude[i] * TAU * frequency[i] * (TAU * frequency[i] * t + phase[i]).cos());
                (off, vel)
            }
            Reference::Line { velocity, start, stop } => {
                let v = Vector3::from(*velocity);
                let s = (t - start).clamp(0.0, stop - start);
                let moving = t >= *start && t < *stop;
                (v * s, if moving { v } else { Vector3::zeros() })
            }
        };
        (
            Pose::new(self.x0.position + off, self.x0.orientation),
            Twist::new(vel, Vector3::zeros()),
        )
    }

    /// End-effector pose, twist and the external wrench at the current state.
    fn measure(&mut self) -> Result<(Pose, DMatrix<f64>)> {
        let x = self.model.forward_kinematics(&self.state)?;
        let j = self.model.whole_body_jacobian(&self.state)?;
        let v = &j * &self.state.dq;
        let twist = Twist::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]));
        self.contact = contact_wrench(&self.walls, &x, &twist);
        self.f_ext = self.contact.wrench + self.payload_wrench();
        Ok((x, j))
    }

    fn latch(&mut self) {
        self.safety_stop = true;
        self.state.dq.fill(0.0);
        self.base_cmd = [0.0; 3];
        self.arm_torque.fill(0.0);
        self.velocity_cmd.fill(0.0);
        self.command.fill(0.0);
    }

    /// Controller tick at the current time: applies inputs, advances the
    /// interface, checks the safety limit and computes the command.
    fn control(&mut self) -> Result<Record> {
        let t = self.time();
        let dt_c = self.tick_period();
        self.human = self.profile_wrench(t) + self.external;
        let noise = self.noise();
        self.human = self.human + noise;

        let x_now = self.model.forward_kinematics(&self.state)?;
        while self.next_event < self.cfg.events.len() && self.cfg.events[self.next_event].t <= t + 1e-9 {
            let b = self.cfg.events[self.next_event].button;
            self.interface = self.interface.handle_button(b, &self.state, &x_now);
            self.next_event += 1;
        }
        while let Some(b) = self.pending.pop_front() {
            self.interface = self.interface.handle_button(b, &self.state, &x_now);
        }
        self.update_payload(t);

        if let Some(r) = self.cfg.reference.clone() {
            let (x_d, dx_d) = self.reference(&r, t);
            self.interface.x_d = x_d;
            self.interface.dx_d = dx_d;
        } else {
            self.interface = self.interface.admittance_step(&self.cfg.admittance, &self.human, dt_c)?;
        }

        let (x, _) = self.measure()?;
        if !self.safety_stop && self.f_ext.norm() > self.model.arm_payload_limit() {
            self.latch();
        }
        if !self.safety_stop {
            self.compute_command(dt_c)?;
        }
        Ok(Record {
            t,
            q: self.state.q.clone(),
            dq: self.state.dq.clone(),
            x,
            x_d: self.interface.x_d,
            dx_d: self.interface.dx_d,
            f_human: self.human,
            f_ext: self.f_ext,
            command: self.command.clone(),
            admittance: self.interface.admittance_active,
            motion: self.interface.motion_mode,
            gripper: self.interface.gripper_closed,
            priority: self.interface.priority,
            safety_stop: self.safety_stop,
            diagnostics: self.diagnostics,
        })
    }

    fn compute_command(&mut self, dt_c: f64) -> Result<()> {
        match self.kind {
            ControllerKind::Moca => {
                let gains = &self.cfg.controller.moca;
                let out = moca_step(&self.model, gains, &self.state, &self.interface)?;
                let tau_v = [out.tau_c[0], out.tau_c[1], out.tau_c[2]];
                self.base_cmd = base_torque_to_velocity(&gains.base, &tau_v, &self.base_cmd, dt_c)?;
                let na = self.model.arm_dof();
                let mut tau_a = out.tau_c.rows(BASE_DOF, na).into_owned();
                if gains.gravity_compensation {
                    let q_a: Vec<f64> = self.state.arm().iter().copied().collect();
                    tau_a += dynamics::arm_gravity(&self.model, &q_a, self.gravity)?;
                }
                self.arm_torque = tau_a;
                self.diagnostics = Diagnostics {
                    lambda_condition: out.lambda_condition,
                    wrench_norm: out.wrench.norm(),
                    ..Diagnostics::default()
                };
                self.command = out.tau_c;
            }
            ControllerKind::Kairos => {
                let out = clik_step(&self.model, &self.cfg.controller.kairos, &self.state, &self.interface)?;
                self.diagnostics = Diagnostics {
                    manipulability: out.manipulability,
                    damping: out.damping,
                    residual: out.residual,
                    ..Diagnostics::default()
                };
                self.velocity_cmd = out.dq_d.clone();
                self.command = out.dq_d;
            }
        }
        Ok(())
    }

    fn lag(value: f64, target: f64, tau: f64, dt: f64) -> f64 {
        if tau <= 0.0 {
            target
        } else {
            value + (target - value) * (1.0 - (-dt / tau).exp())
        }
    }

    fn physics(&mut self) -> Result<()> {
        if self.safety_stop {
            self.step += 1;
            return Ok(());
        }
        let dt = self.dt;
        let na = self.model.arm_dof();
        let base_lag = self.cfg.plant.base_lag;
        match self.kind {
            ControllerKind::Moca => {
                let mut q_a: Vec<f64> = self.state.arm().iter().copied().collect();
                let mut dq_a: Vec<f64> = self.state.arm_velocity().iter().copied().collect();
                let mut tau = self.arm_torque.clone();
                if !self.walls.is_empty() || self.payload_attached {
                    let (_, j) = self.measure()?;
                    let f = self.f_ext.to_vector();
                    tau += j.columns(BASE_DOF, na).transpose() * f;
                }
                if self.injected.is_none() {
                    self.injected = Some(self.f_ext);
                }
                let (model, plant, gravity, attached) = (&self.model, &self.plant_model, self.gravity, self.payload_attached);
                let accel = |q: &[f64], dq: &[f64]| {
                    let (m, bias) = if attached {
                        // payload inertia is lumped into the last link, its weight enters via f_ext
                        let (m, b) = dynamics::arm_mass_and_bias(plant, q, dq, 0.0)?;
                        (m, b + dynamics::arm_gravity(model, q, gravity)?)
                    } else {
                        dynamics::arm_mass_and_bias(model, q, dq, gravity)?
                    };
                    arm_acceleration(&m, &bias, &tau)
                };
                integrate_arm(accel, &mut q_a, &mut dq_a, dt)?;
                for i in 0..BASE_DOF {
                    let v = Self::lag(self.state.dq[i], self.base_cmd[i], base_lag, dt);
                    self.state.dq[i] = v;
                    self.state.q[i] += v * dt;
                }
                for i in 0..na {
                    self.state.q[BASE_DOF + i] = q_a[i];
                    self.state.dq[BASE_DOF + i] = dq_a[i];
                }
            }
            ControllerKind::Kairos => {
                if self.injected.is_none() {
                    self.injected = Some(self.f_ext);
                }
                let joint_lag = self.cfg.plant.joint_lag;
                for i in 0..self.state.q.len() {
                    let tau = if i < BASE_DOF { base_lag } else { joint_lag };
                    let v = Self::lag(self.state.dq[i], self.velocity_cmd[i], tau, dt);
                    self.state.dq[i] = v;
                    self.state.q[i] += v * dt;
                }
            }
        }
        self.state.wrap_yaw();
        self.step += 1;
        if self.state.q.iter().chain(self.state.dq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFault {
                t: self.time(),
                msg: "non-finite joint state".into(),
            });
        }
        Ok(())
    }

    /// Runs one controller tick followed by the physics steps up to the next one.
    pub fn tick(&mut self) -> Result<Record> {
        let rec = self.control()?;
        self.injected = None;
        for _ in 0..self.steps_per_tick {
            self.physics()?;
        }
        Ok(rec)
    }

    /// Record at the current time without advancing the plant.
    pub fn observe(&mut self) -> Result<Record> {
        self.control()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(robot: &str) -> ScenarioConfig {
        ScenarioConfig::from_toml_str(&format!("name = \"t\"\nrobot = \"{robot}\"\nduration = 1.0\n")).unwrap()
    }

    #[test]
    fn kairos_at_rest_stays_put() {
        let mut w = World::new(&cfg("kairos-like")).unwrap();
        let q0 = w.state().q.clone();
        for _ in 0..50 {
            w.tick().unwrap();
        }
        assert_eq!(w.state().q, q0);
        assert!((w.time() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn payload_weight_shows_in_f_ext() {
        let mut c = cfg("kairos-like");
        c.payload = Some(super::super::config::PayloadConfig {
            mass: 10.0,
            trigger: PayloadTrigger::Scripted { attach: 0.0, detach: None },
        });
        let mut w = World::new(&c).unwrap();
        let r = w.tick().unwrap();
        assert!((r.f_ext.linear.z + 98.1).abs() < 1e-9);
        assert!(!r.safety_stop);
    }

    #[test]
    fn heavy_payload_latches_moca() {
        let mut c = cfg("moca-like");
        c.payload = Some(super::super::config::PayloadConfig {
            mass: 5.0,
            trigger: PayloadTrigger::Scripted { attach: 0.0, detach: None },
        });
        let mut w = World::new(&c).unwrap();
        let r = w.tick().unwrap();
        assert!(r.safety_stop);
        let q = w.state().q.clone();
        for _ in 0..10 {
            w.tick().unwrap();
        }
        assert_eq!(w.state().q, q);
        assert_eq!(w.state().dq.norm(), 0.0);
    }
}
