//! Weighted whole-body closed-loop inverse differential kinematics.
//!
//! Two priority levels: a damped, weighted least-squares tracking task and a
//! posture task projected into the null space of the whole-body Jacobian.
//! Damping of the arm joints grows as the arm manipulability drops below a
//! threshold.

use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interface::{InterfaceState, Priority};
use crate::model::{manipulability, JointState, RobotModel, BASE_DOF};
use crate::spatial::Pose;
use crate::spatial::Twist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClikModeWeights {
    pub w_base: f64,
    pub w_arm: f64,
    /// Posture gain `k_i`; zero disables the secondary task.
    pub k_posture: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClikGains {
    /// Pose feedback gain diagonal `K` [1/s].
    pub gain: [f64; 6],
    /// Tracking weight diagonal `W_1`.
    pub tracking_weight: [f64; 6],
    pub k0: f64,
    /// Manipulability threshold `w_t`.
    pub w_threshold: f64,
    pub manipulation: ClikModeWeights,
    pub locomotion: ClikModeWeights,
    /// Scale `k` with manipulability; when false `k` stays at 1.
    pub adaptive_damping: bool,
    pub limits: VelocityLimits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityLimits {
    pub enabled: bool,
    /// Per-joint arm limit [rad/s].
    pub arm: f64,
    /// Base limit applied to x, y [m/s] and yaw [rad/s].
    pub base: f64,
}

impl Default for ClikGains {
    fn default() -> Self {
        Self {
            gain: [0.5, 0.5, 0.5, 0.05, 0.01, 0.01],
            tracking_weight: [1000.0, 1000.0, 1000.0, 500.0, 500.0, 500.0],
            k0: 2.0,
            w_threshold: 0.001,
            manipulation: ClikModeWeights {
                w_base: 100.0,
                w_arm: 1.0,
                k_posture: 0.0,
            },
            locomotion: ClikModeWeights {
                w_base: 10.0,
                w_arm: 0.5,
                k_posture: 1.0,
            },
            adaptive_damping: true,
            limits: VelocityLimits {
                enabled: true,
                arm: 2.0,
                base: 1.0,
            },
        }
    }
}

impl ClikGains {
    pub fn validate(&self) -> Result<()> {
        if self.tracking_weight.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("kairos.tracking_weight", "W1 must be positive definite"));
        }
        if self.gain.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::config("kairos.gain", "gains must be non-negative"));
        }
        if !(self.w_threshold > 0.0) || !(self.k0 >= 0.0) {
            return Err(Error::config("kairos.w_threshold", "w_t must be positive and k0 non-negative"));
        }
        for (name, m) in [("kairos.manipulation", &self.manipulation), ("kairos.locomotion", &self.locomotion)] {
            if !(m.w_base > 0.0 && m.w_arm > 0.0 && m.k_posture >= 0.0) {
                return Err(Error::config(name, "weights must be positive and k_i non-negative"));
            }
        }
        if self.manipulation.k_posture != 0.0 {
            return Err(Error::config("kairos.manipulation.k_posture", "must be zero in manipulation"));
        }
        Ok(())
    }

    pub fn resolve(&self, priority: Priority) -> ClikParams {
        let mode = match priority {
            Priority::Manipulation => self.manipulation,
            Priority::Locomotion => self.locomotion,
        };
        ClikParams {
            gain: Vector6::from(self.gain),
            tracking_weight: Vector6::from(self.tracking_weight),
            w_base: mode.w_base,
            w_arm: mode.w_arm,
            k0: self.k0,
            w_threshold: self.w_threshold,
            k_posture: mode.k_posture,
        }
    }
}

/// Gains in effect for one priority mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ClikParams {
    pub gain: Vector6<f64>,
    pub tracking_weight: Vector6<f64>,
    pub w_base: f64,
    pub w_arm: f64,
    pub k0: f64,
    pub w_threshold: f64,
    pub k_posture: f64,
}

/// `k = 1 + k0 (1 − w/w_t)²` below the threshold, 1 above.
pub fn damping_factor(w: f64, params: &ClikParams) -> f64 {
    if w <= params.w_threshold {
        let r = 1.0 - w / params.w_threshold;
        1.0 + params.k0 * r * r
    } else {
        1.0
    }
}

/// `W_2 = diag(w_b 1_3, w_a k² 1_{n_a})`
pub fn regularization_weight(params: &ClikParams, k: f64, arm_dof: usize) -> DMatrix<f64> {
    let arm = params.w_arm * k * k;
    DMatrix::from_diagonal(&DVector::from_fn(BASE_DOF + arm_dof, |i, _| {
        if i < BASE_DOF {
            params.w_base
        } else {
            arm
        }
    }))
}

/// Task-space reference `ẋ_d + K (x_d ⊖ x)`.
pub fn task_reference(params: &ClikParams, x: &Pose, x_d: &Pose, dx_d: &Twist) -> Vector6<f64> {
    dx_d.to_vector() + params.gain.component_mul(&x.error_to(x_d))
}

/// Minimizer of `½‖ẋ_d + K(x_d ⊖ x) − J q̇‖²_{W1} + ½‖q̇‖²_{W2}`.
pub fn primary_velocity(
    j: &DMatrix<f64>,
    params: &ClikParams,
    w2: &DMatrix<f64>,
    x: &Pose,
    x_d: &Pose,
    dx_d: &Twist,
) -> Result<DVector<f64>> {
    let n = j.ncols();
    if j.nrows() != 6 {
        return Err(Error::dim("task Jacobian rows", 6, j.nrows()));
    }
    if w2.shape() != (n, n) {
        return Err(Error::dim("regularization weight", n, w2.nrows()));
    }
    let r = task_reference(params, x, x_d, dx_d);
    let w1 = DMatrix::from_diagonal(&DVector::from_column_slice(params.tracking_weight.as_slice()));
    let jt_w1 = j.transpose() * w1;
    let normal = &jt_w1 * j + w2;
    let rhs = jt_w1 * DVector::from_column_slice(r.as_slice());
    let chol = normal
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("JᵀW1J + W2"))?;
    Ok(chol.solve(&rhs))
}

/// `q̇_d2 = G_i (q_pref − q)`, `G_i = diag(0_3, k_i 1_{n_a})`.
pub fn secondary_velocity(params: &ClikParams, q: &DVector<f64>, q_pref: &DVector<f64>) -> Result<DVector<f64>> {
    if q.len() != q_pref.len() {
        return Err(Error::dim("q_pref", q.len(), q_pref.len()));
    }
    Ok(DVector::from_fn(q.len(), |i, _| {
        if i < BASE_DOF {
            0.0
        } else {
            params.k_posture * (q_pref[i] - q[i])
        }
    }))
}

/// Projects `v` onto the null space of `J`: `(I − J⁺J) v`, with `J⁺` from an SVD
/// truncating singular values below `1e-8 σ_max`.
pub fn nullspace_project(j: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != j.ncols() {
        return Err(Error::dim("projected vector", j.ncols(), v.len()));
    }
    let svd = j.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut out = v.clone();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && *s > 1e-8 * smax {
            let row = vt.row(i).transpose();
            out -= &row * row.dot(v);
        }
    }
    Ok(out)
}

fn clamp(v: &mut DVector<f64>, limits: &VelocityLimits) {
    for (i, x) in v.iter_mut().enumerate() {
        let lim = if i < BASE_DOF { limits.base } else { limits.arm };
        *x = x.clamp(-lim, lim);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClikOutput {
    pub dq_d: DVector<f64>,
    pub manipulability: f64,
    pub damping: f64,
    /// Relative tracking residual `‖J q̇_d − r‖ / ‖r‖`; zero when `‖r‖ < 1e-12`.
    pub residual: f64,
}

/// Full controller tick.
pub fn clik_step(model: &RobotModel, gains: &ClikGains, state: &JointState, interface: &InterfaceState) -> Result<ClikOutput> {
    let params = gains.resolve(interface.priority);
    let q_a: Vec<f64> = state.arm().iter().copied().collect();
    let ja = model.arm_jacobian(&q_a)?;
    let w = manipulability(&ja);
    let k = if gains.adaptive_damping { damping_factor(w, &params) } else { 1.0 };
    let w2 = regularization_weight(&params, k, model.arm_dof());

    let x = model.forward_kinematics(state)?;
    let j = model.whole_body_jacobian(state)?;
    let primary = primary_velocity(&j, &params, &w2, &x, &interface.x_d, &interface.dx_d)?;
    let secondary = secondary_velocity(&params, &state.q, &interface.q_pref)?;
    let mut dq_d = primary + nullspace_project(&j, &secondary)?;
    if gains.limits.enabled {
        clamp(&mut dq_d, &gains.limits);
    }

    let r = task_reference(&params, &x, &interface.x_d, &interface.dx_d);
    let achieved = &j * &dq_d;
    let rn = r.norm();
    let residual = if rn >= 1e-12 {
        (Vector6::from_column_slice(achieved.as_slice()) - r).norm() / rn
    } else {
        0.0
    };
    Ok(ClikOutput {
        dq_d,
        manipulability: w,
        damping: k,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn loco() -> ClikParams {
        ClikGains::default().resolve(Priority::Locomotion)
    }

    #[test]
    fn damping_schedule_points() {
        let p = loco();
        assert_eq!(damping_factor(p.w_threshold, &p), 1.0);
        assert_eq!(damping_factor(0.0, &p), 3.0);
        assert_relative_eq!(damping_factor(p.w_threshold / 2.0, &p), 1.5, epsilon = 1e-15);
        assert_eq!(damping_factor(1.0, &p), 1.0);
    }

    #[test]
    fn regularization_weights() {
        let p = loco();
        let w2 = regularization_weight(&p, 1.0, 6);
        let diag: Vec<f64> = w2.diagonal().iter().copied().collect();
        assert_eq!(diag, vec![10.0, 10.0, 10.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let w2 = regularization_weight(&p, 3.0, 6);
        assert_relative_eq!(w2[(5, 5)], 4.5, epsilon = 1e-12);
        assert!(w2.clone().cholesky().is_some());
    }

    #[test]
    fn secondary_task_cases() {
        let q = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let q_pref = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let man = ClikGains::default().resolve(Priority::Manipulation);
        assert_eq!(secondary_velocity(&man, &q, &q_pref).unwrap().norm(), 0.0);
        let v = secondary_velocity(&loco(), &q, &q_pref).unwrap();
        assert_eq!(v.rows(0, 3).norm(), 0.0);
        assert_relative_eq!(v[3], -0.1);
        assert_eq!(secondary_velocity(&loco(), &q, &q).unwrap().norm(), 0.0);
    }

    #[test]
    fn square_full_rank_has_trivial_null_space() {
        let j = DMatrix::from_fn(6, 6, |i, k| if i == k { 2.0 } else { 0.1 * (i + k) as f64 });
        let v = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        assert!(nullspace_project(&j, &v).unwrap().norm() < 1e-12);
    }

    #[test]
    fn zero_error_gives_zero_velocity() {
        let m = RobotModel::kairos_like();
        let s = JointState::from_parts([0.0; 3], &crate::model::home_configuration(&m));
        let iface = InterfaceState::new(m.forward_kinematics(&s).unwrap(), &s);
        let out = clik_step(&m, &ClikGains::default(), &s, &iface).unwrap();
        assert!(out.dq_d.norm() < 1e-12);
        assert_eq!(out.residual, 0.0);
    }
}
