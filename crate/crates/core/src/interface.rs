//! Admittance-type human interface: integrates the measured human wrench into a
//! desired end-effector motion and runs the four-button state machine.

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JointState;
use crate::spatial::{Pose, Twist, Wrench};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationFrame {
    World,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmittanceParams {
    /// Diagonal of `M_adm` `[kg ×3, kg·m² ×3]`.
    pub mass: [f64; 6],
    /// Diagonal of `D_adm`.
    pub damping: [f64; 6],
    #[serde(default = "world_frame")]
    pub orientation_frame: OrientationFrame,
}

fn world_frame() -> OrientationFrame {
    OrientationFrame::World
}

impl Default for AdmittanceParams {
    /// Values tuned for the user studies.
    fn default() -> Self {
        Self {
            mass: [6.0, 6.0, 6.0, 1.0, 1.0, 1.0],
            damping: [20.0, 20.0, 20.0, 1.5, 1.5, 1.5],
            orientation_frame: OrientationFrame::World,
        }
    }
}

impl AdmittanceParams {
    /// Lighter translational mass used for the interaction and load-carrying runs.
    pub fn supplementary() -> Self {
        Self {
            mass: [3.0, 3.0, 3.0, 1.0, 1.0, 1.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mass.iter().chain(&self.damping).all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("admittance", "mass and damping must be strictly positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionMode {
    Translation,
    RotoTranslation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Priority {
    Manipulation,
    Locomotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Button {
    /// Toggle the admittance controller.
    A,
    /// Toggle translation / roto-translation.
    M,
    /// Close / open the gripper.
    G,
    /// Toggle manipulation / locomotion priority.
    P,
}

impl std::str::FromStr for Button {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(Button::A),
            "M" => Ok(Button::M),
            "G" => Ok(Button::G),
            "P" => Ok(Button::P),
            other => Err(Error::config("button", format!("unknown button `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceState {
    pub admittance_active: bool,
    pub motion_mode: MotionMode,
    pub gripper_closed: bool,
    pub priority: Priority,
    pub x_d: Pose,
    pub dx_d: Twist,
    pub q_pref: DVector<f64>,
    /// Set when a wrench sample was rejected.
    pub fault: bool,
}

impl InterfaceState {
    /// Fresh interface anchored at the current end-effector pose, with the
    /// current configuration as preferred posture.
    pub fn new(ee: Pose, q: &JointState) -> Self {
        Self {
            admittance_active: true,
            motion_mode: MotionMode::Translation,
            gripper_closed: false,
            priority: Priority::Manipulation,
            x_d: ee,
            dx_d: Twist::zero(),
            q_pref: q.q.clone(),
            fault: false,
        }
    }

    /// One control-rate update of `M_adm ẍ_d + D_adm ẋ_d = λ_h` (semi-implicit Euler:
    /// velocity first, then pose with the new velocity).
    pub fn admittance_step(&self, params: &AdmittanceParams, wrench: &Wrench, dt: f64) -> Result<InterfaceState> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(Error::config("dt", format!("admittance step {dt} outside (0, 0.01]")));
        }
        if !wrench.is_finite() {
            let mut s = self.clone();
            s.fault = true;
            return Ok(s);
        }
        let mut next = self.clone();
        if !self.admittance_active {
            next.dx_d = Twist::zero();
            return Ok(next);
        }

        let mut lambda = wrench.to_vector();
        let translation_only = self.motion_mode == MotionMode::Translation;
        if translation_only {
            lambda.fixed_rows_mut::<3>(3).fill(0.0);
        }
        let v = self.dx_d.to_vector();
        let acc = Vector6::from_fn(|i, _| (lambda[i] - params.damping[i] * v[i]) / params.mass[i]);
        let mut v = v + acc * dt;
        if translation_only {
            v.fixed_rows_mut::<3>(3).fill(0.0);
        }
        next.dx_d = Twist::from_vector(&v);

        let w = next.dx_d.angular;
        let rot = UnitQuaternion::from_scaled_axis(w * dt);
        let orientation = match params.orientation_frame {
            OrientationFrame::World => rot * self.x_d.orientation,
            OrientationFrame::Body => self.x_d.orientation * rot,
        };
        next.x_d = Pose::new(self.x_d.position + next.dx_d.linear * dt, orientation);
        Ok(next)
    }

    /// Applies a button press. `current_ee` is the measured end-effector pose
    /// used to re-anchor the target when the admittance is switched off.
    pub fn handle_button(&self, button: Button, current_q: &JointState, current_ee: &Pose) -> InterfaceState {
        let mut s = self.clone();
        match button {
            Button::A => {
                s.admittance_active = !s.admittance_active;
                if !s.admittance_active {
                    s.dx_d = Twist::zero();
                    s.x_d = *current_ee;
                }
            }
            Button::M => {
                s.motion_mode = match s.motion_mode {
                    MotionMode::Translation => MotionMode::RotoTranslation,
                    MotionMode::RotoTranslation => {
                        s.dx_d.angular = Vector3::zeros();
                        MotionMode::Translation
                    }
                };
            }
            Button::G => s.gripper_closed = !s.gripper_closed,
            Button::P => {
                s.priority = match s.priority {
                    Priority::Manipulation => {
                        s.q_pref = current_q.q.clone();
                        Priority::Locomotion
                    }
                    Priority::Locomotion => Priority::Manipulation,
                };
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fresh() -> (InterfaceState, JointState) {
        let q = JointState::from_parts([0.0; 3], &[0.1, 0.2]);
        (InterfaceState::new(Pose::identity(), &q), q)
    }

    #[test]
    fn constant_force_reaches_steady_state() {
        let (mut s, _) = fresh();
        let p = AdmittanceParams::default();
        let f = Wrench::new(Vector3::new(20.0, 0.0, 0.0), Vector3::zeros());
        for _ in 0..3000 {
            s = s.admittance_step(&p, &f, 1e-3).unwrap();
        }
        let analytic = 1.0 - (-3.0f64 / 0.3).exp();
        assert_relative_eq!(s.dx_d.linear.x, analytic, epsilon = 1e-3);
        assert!((s.dx_d.linear.x - 1.0).abs() < 1e-3);
    }

    #[test]
    fn free_decay_time_constant() {
        let (mut s, _) = fresh();
        s.dx_d.linear.x = 0.5;
        let p = AdmittanceParams::default();
        let dt = 1e-4;
        for _ in 0..3000 {
            s = s.admittance_step(&p, &Wrench::zero(), dt).unwrap();
        }
        // one time constant M/D = 0.3 s
        assert_relative_eq!(s.dx_d.linear.x, 0.5 * (-1.0f64).exp(), max_relative = 1e-3);
    }

    #[test]
    fn translation_mode_gates_torque() {
        let (s, _) = fresh();
        let p = AdmittanceParams::default();
        let t = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 5.0));
        let next = s.admittance_step(&p, &t, 1e-3).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn roto_translation_integrates_orientation() {
        let (s, q) = fresh();
        let s = s.handle_button(Button::M, &q, &Pose::identity());
        let p = AdmittanceParams::default();
        let t = Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.5));
        let mut st = s;
        for _ in 0..1000 {
            st = st.admittance_step(&p, &t, 1e-3).unwrap();
        }
        assert!(st.dx_d.angular.z > 0.5);
        assert!(st.x_d.orientation.angle() > 0.1);
    }

    #[test]
    fn inactive_holds_target() {
        let (s, q) = fresh();
        let anchor = Pose::new(Vector3::new(1.0, 2.0, 3.0), UnitQuaternion::identity());
        let s = s.handle_button(Button::A, &q, &anchor);
        assert!(!s.admittance_active);
        assert_eq!(s.x_d, anchor);
        let p = AdmittanceParams::default();
        let f = Wrench::new(Vector3::new(50.0, -3.0, 7.0), Vector3::new(1.0, 2.0, 3.0));
        let next = s.admittance_step(&p, &f, 1e-3).unwrap();
        assert_eq!(next.x_d, anchor);
        assert_eq!(next.dx_d, Twist::zero());
    }

    #[test]
    fn non_finite_wrench_is_rejected() {
        let (s, _) = fresh();
        let f = Wrench::new(Vector3::new(f64::NAN, 0.0, 0.0), Vector3::zeros());
        let next = s.admittance_step(&AdmittanceParams::default(), &f, 1e-3).unwrap();
        assert!(next.fault);
        assert_eq!(next.x_d, s.x_d);
        assert_eq!(next.dx_d, s.dx_d);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let (s, _) = fresh();
        assert!(s.admittance_step(&AdmittanceParams::default(), &Wrench::zero(), 0.02).is_err());
        assert!(s.admittance_step(&AdmittanceParams::default(), &Wrench::zero(), 0.0).is_err());
    }

    #[test]
    fn buttons_toggle() {
        let (s, q) = fresh();
        let ee = Pose::identity();
        let twice = s.handle_button(Button::A, &q, &ee).handle_button(Button::A, &q, &ee);
        assert_eq!(twice.admittance_active, s.admittance_active);

        let g = s.handle_button(Button::G, &q, &ee);
        assert!(g.gripper_closed);
        assert_eq!(InterfaceState { gripper_closed: false, ..g }, s);

        let star = JointState::from_parts([1.0, 2.0, 0.3], &[0.7, -0.4]);
        let p = s.handle_button(Button::P, &star, &ee);
        assert_eq!(p.priority, Priority::Locomotion);
        assert_eq!(p.q_pref, star.q);
        // back to manipulation leaves the preferred posture alone
        let back = p.handle_button(Button::P, &q, &ee);
        assert_eq!(back.priority, Priority::Manipulation);
        assert_eq!(back.q_pref, star.q);
    }
}
