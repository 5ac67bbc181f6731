//! Weighted whole-body Cartesian impedance controller for torque-controlled
//! mobile manipulators.
//!
//! The Cartesian wrench `F` of a spring-damper between the current and the
//! desired end-effector pose is distributed over base and arm through an
//! inertia-based weighting `W = H M⁻¹ H`, with a posture torque projected into
//! the task null space:
//!
//! ```text
//! τ_c = W⁻¹M⁻¹JᵀΛ_W Λ⁻¹F + (I − W⁻¹M⁻¹JᵀΛ_W J M⁻¹) τ_0
//! ```
//!
//! The base part of `τ_c` drives a virtual mass-damper whose velocity is sent to
//! the velocity-controlled base.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, BaseVirtualParams};
use crate::error::{Error, Result};
use crate::interface::{InterfaceState, Priority};
use crate::model::{JointState, RobotModel, BASE_DOF};
use crate::spatial::{Pose, Twist, Wrench};

/// Minimum eigenvalue of `J M⁻¹ Jᵀ` below which the task is treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;
/// Tikhonov term added to the task-space inversions when singular.
pub const TIKHONOV_EPS: f64 = 1e-6;

/// Priority-dependent part of the impedance gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceModeGains {
    /// Arm block of `K_0` (the base block is always zero).
    pub nullspace_stiffness: f64,
    pub eta_base: f64,
    pub eta_arm: f64,
}

/// Configuration-level impedance gains covering both priority modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceGains {
    /// Diagonal of `K_d`: `[N/m ×3, N·m/rad ×3]`.
    pub stiffness: [f64; 6],
    /// Damping ratio `ξ` of the factorized rule `D = 2ξ√K`.
    pub xi: f64,
    /// Explicit `D_d` diagonal; derived from `stiffness` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<[f64; 6]>,
    pub manipulation: ImpedanceModeGains,
    pub locomotion: ImpedanceModeGains,
    pub base: BaseVirtualParams,
    /// Add `g_a(q)` to the arm torque, as the arm's low-level controller does.
    pub gravity_compensation: bool,
}

impl Default for ImpedanceGains {
    fn default() -> Self {
        Self {
            stiffness: [500.0, 500.0, 500.0, 30.0, 30.0, 30.0],
            xi: 0.7,
            damping: None,
            manipulation: ImpedanceModeGains {
                nullspace_stiffness: 5.0,
                eta_base: 5.0,
                eta_arm: 1.0,
            },
            locomotion: ImpedanceModeGains {
                nullspace_stiffness: 50.0,
                eta_base: 1.0,
                eta_arm: 6.0,
            },
            base: BaseVirtualParams::default(),
            gravity_compensation: true,
        }
    }
}

impl ImpedanceGains {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: &[f64]| v.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !nonneg(&self.stiffness) || !(self.xi >= 0.0) {
            return Err(Error::config("moca.stiffness", "stiffness and xi must be non-negative"));
        }
        if let Some(d) = &self.damping {
            if !nonneg(d) {
                return Err(Error::config("moca.damping", "damping must be non-negative"));
            }
        }
        for (name, m) in [("moca.manipulation", &self.manipulation), ("moca.locomotion", &self.locomotion)] {
            if !(m.nullspace_stiffness >= 0.0 && m.eta_base > 0.0 && m.eta_arm > 0.0) {
                return Err(Error::config(name, "eta must be positive and K_0 non-negative"));
            }
        }
        self.base.validate()
    }

    pub fn resolve(&self, priority: Priority, arm_dof: usize) -> ImpedanceParams {
        let mode = match priority {
            Priority::Manipulation => self.manipulation,
            Priority::Locomotion => self.locomotion,
        };
        let stiffness = Vector6::from(self.stiffness);
        let damping = match self.damping {
            Some(d) => Vector6::from(d),
            None => stiffness.map(|k| 2.0 * self.xi * k.sqrt()),
        };
        let n = BASE_DOF + arm_dof;
        let k0 = DVector::from_fn(n, |i, _| if i < BASE_DOF { 0.0 } else { mode.nullspace_stiffness });
        let d0 = k0.map(|k| 2.0 * self.xi * k.sqrt());
        ImpedanceParams {
            stiffness,
            damping,
            nullspace_stiffness: k0,
            nullspace_damping: d0,
            eta_base: mode.eta_base,
            eta_arm: mode.eta_arm,
            xi: self.xi,
            base: self.base,
        }
    }
}

/// Gains in effect for one priority mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceParams {
    pub stiffness: Vector6<f64>,
    pub damping: Vector6<f64>,
    pub nullspace_stiffness: DVector<f64>,
    pub nullspace_damping: DVector<f64>,
    pub eta_base: f64,
    pub eta_arm: f64,
    pub xi: f64,
    pub base: BaseVirtualParams,
}

/// `F = D_d(ẋ_d − ẋ) + K_d (x_d ⊖ x)`
pub fn cartesian_wrench(params: &ImpedanceParams, x: &Pose, dx: &Twist, x_d: &Pose, dx_d: &Twist) -> Wrench {
    let err = x.error_to(x_d);
    let derr = dx_d.to_vector() - dx.to_vector();
    Wrench::from_vector(&(params.damping.component_mul(&derr) + params.stiffness.component_mul(&err)))
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dim(what, n, m.nrows()));
    }
    Ok(())
}

fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
        return Err(Error::NotPositiveDefinite(what));
    }
    m.clone().cholesky().map(|c| c.inverse()).ok_or(Error::NotPositiveDefinite(what))
}

/// `W = H M⁻¹ H` with `H = diag(η_B I_3, η_A I_{n_a})`.
pub fn weight_matrix(mass: &DMatrix<f64>, eta_base: f64, eta_arm: f64) -> Result<DMatrix<f64>> {
    let n = mass.nrows();
    check_square(mass, n, "inertia matrix")?;
    let minv = spd_inverse(mass, "inertia matrix")?;
    let h = |i: usize| if i < BASE_DOF { eta_base } else { eta_arm };
    let w = DMatrix::from_fn(n, n, |i, j| h(i) * minv[(i, j)] * h(j));
    Ok((&w + w.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInertias {
    /// `Λ = (J M⁻¹ Jᵀ)⁻¹`
    pub lambda: Matrix6<f64>,
    /// `Λ_W = (J M⁻¹ W⁻¹ M⁻¹ Jᵀ)⁻¹`
    pub lambda_w: Matrix6<f64>,
    /// `J̄ = M⁻¹ Jᵀ Λ`
    pub jbar: DMatrix<f64>,
}

struct Factors {
    /// `M⁻¹ Jᵀ`
    minv_jt: DMatrix<f64>,
    /// `W⁻¹ M⁻¹ Jᵀ`
    winv_minv_jt: DMatrix<f64>,
    /// `Λ⁻¹ = J M⁻¹ Jᵀ`
    lambda_inv: Matrix6<f64>,
    lambda_w_inv: Matrix6<f64>,
}

fn factors(j: &DMatrix<f64>, mass: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Factors> {
    let n = j.ncols();
    if j.nrows() != 6 {
        return Err(Error::dim("task Jacobian rows", 6, j.nrows()));
    }
    check_square(mass, n, "inertia matrix")?;
    check_square(w, n, "weight matrix")?;
    let m_chol = mass.clone().cholesky().ok_or(Error::NotPositiveDefinite("inertia matrix"))?;
    let w_chol = w.clone().cholesky().ok_or(Error::NotPositiveDefinite("weight matrix"))?;
    let minv_jt = m_chol.solve(&j.transpose());
    let winv_minv_jt = w_chol.solve(&minv_jt);
    let sym = |m: DMatrix<f64>| -> Matrix6<f64> {
        let m: Matrix6<f64> = m.fixed_view::<6, 6>(0, 0).into_owned();
        (m + m.transpose()) * 0.5
    };
    let lambda_inv = sym(j * &minv_jt);
    let lambda_w_inv = sym(minv_jt.transpose() * &winv_minv_jt);
    Ok(Factors {
        minv_jt,
        winv_minv_jt,
        lambda_inv,
        lambda_w_inv,
    })
}

fn min_eigenvalue(m: &Matrix6<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

fn invert_task(m: &Matrix6<f64>, eps: f64) -> Result<Matrix6<f64>> {
    let reg = m + Matrix6::identity() * eps;
    reg.cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::Singular { sigma_min: min_eigenvalue(m) })
}

fn inertias_from(f: &Factors, eps: f64) -> Result<TaskInertias> {
    let lambda = invert_task(&f.lambda_inv, eps)?;
    let lambda_w = invert_task(&f.lambda_w_inv, eps)?;
    let jbar = &f.minv_jt * DMatrix::from_column_slice(6, 6, lambda.as_slice());
    Ok(TaskInertias { lambda, lambda_w, jbar })
}

fn check_rank(f: &Factors) -> Result<()> {
    let sigma_min = min_eigenvalue(&f.lambda_inv);
    if sigma_min <= SINGULAR_THRESHOLD {
        return Err(Error::Singular { sigma_min });
    }
    Ok(())
}

/// Unweighted and weighted task inertias and the dynamically consistent inverse.
pub fn weighted_task_inertias(j: &DMatrix<f64>, mass: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<TaskInertias> {
    let f = factors(j, mass, w)?;
    check_rank(&f)?;
    inertias_from(&f, 0.0)
}

/// `τ_0 = −D_0 q̇ + K_0 (q_pref − q)`
pub fn nullspace_torque(params: &ImpedanceParams, q: &DVector<f64>, dq: &DVector<f64>, q_pref: &DVector<f64>) -> Result<DVector<f64>> {
    let n = params.nullspace_stiffness.len();
    for (what, v) in [("q", q), ("dq", dq), ("q_pref", q_pref)] {
        if v.len() != n {
            return Err(Error::dim(what, n, v.len()));
        }
    }
    let mut tau = params.nullspace_stiffness.component_mul(&(q_pref - q)) - params.nullspace_damping.component_mul(dq);
    // base posture is never regulated
    tau.rows_mut(0, BASE_DOF).fill(0.0);
    Ok(tau)
}

fn torque_from(f: &Factors, t: &TaskInertias, wrench: &Vector6<f64>, tau0: &DVector<f64>) -> DVector<f64> {
    let a = &f.winv_minv_jt * t.lambda_w;
    let task = &a * (f.lambda_inv * wrench);
    let projected = tau0 - &a * (f.minv_jt.transpose() * tau0);
    task + projected
}

/// Whole-body torque realizing `J̄ᵀ τ_c = F` with `τ_0` in the null space.
pub fn whole_body_torque(
    j: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    w: &DMatrix<f64>,
    wrench: &Wrench,
    tau0: &DVector<f64>,
) -> Result<DVector<f64>> {
    let f = factors(j, mass, w)?;
    check_rank(&f)?;
    if tau0.len() != j.ncols() {
        return Err(Error::dim("null-space torque", j.ncols(), tau0.len()));
    }
    let t = inertias_from(&f, 0.0)?;
    Ok(torque_from(&f, &t, &wrench.to_vector(), tau0))
}

/// Same as [`whole_body_torque`] but falls back to Tikhonov-regularized task
/// inertias instead of failing near rank deficiency. Returns the torque and
/// whether regularization was engaged.
pub fn whole_body_torque_regularized(
    j: &DMatrix<f64>,
    mass: &DMatrix<f64>,
    w: &DMatrix<f64>,
    wrench: &Wrench,
    tau0: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    let f = factors(j, mass, w)?;
    let singular = check_rank(&f).is_err();
    let t = inertias_from(&f, if singular { TIKHONOV_EPS } else { 0.0 })?;
    Ok((torque_from(&f, &t, &wrench.to_vector(), tau0), singular))
}

/// One semi-implicit step of `M_v q̈_b + D_v q̇_b = τ_v`; returns the new base
/// velocity command.
pub fn base_torque_to_velocity(base: &BaseVirtualParams, tau_v: &[f64; 3], dq_b: &[f64; 3], dt: f64) -> Result<[f64; 3]> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::config("dt", format!("base step {dt} outside (0, 0.01]")));
    }
    Ok(std::array::from_fn(|i| {
        let acc = (tau_v[i] - base.damping[i] * dq_b[i]) / base.mass[i];
        dq_b[i] + acc * dt
    }))
}

/// Per-tick output of the impedance controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MocaOutput {
    /// Whole-body command torque `[τ_v; τ_a]` (without gravity compensation).
    pub tau_c: DVector<f64>,
    pub wrench: Wrench,
    /// Condition number of `Λ⁻¹`.
    pub lambda_condition: f64,
    pub regularized: bool,
}

/// Full controller tick: pose error → wrench → whole-body torque.
pub fn moca_step(
    model: &RobotModel,
    gains: &ImpedanceGains,
    state: &JointState,
    interface: &InterfaceState,
) -> Result<MocaOutput> {
    let params = gains.resolve(interface.priority, model.arm_dof());
    let x = model.forward_kinematics(state)?;
    let j = model.whole_body_jacobian(state)?;
    let dx = Twist::from_vector(&(&j * &state.dq).fixed_rows::<6>(0).into_owned());
    let wrench = cartesian_wrench(&params, &x, &dx, &interface.x_d, &interface.dx_d);

    let q_a: Vec<f64> = state.arm().iter().copied().collect();
    let mass = dynamics::whole_body_inertia(model, &q_a, &params.base)?;
    let w = weight_matrix(&mass, params.eta_base, params.eta_arm)?;
    let tau0 = nullspace_torque(&params, &state.q, &state.dq, &interface.q_pref)?;
    let f = factors(&j, &mass, &w)?;
    let eig = f.lambda_inv.symmetric_eigenvalues();
    let lambda_condition = eig.max() / eig.min().max(f64::MIN_POSITIVE);
    let (tau_c, regularized) = whole_body_torque_regularized(&j, &mass, &w, &wrench, &tau0)?;
    Ok(MocaOutput {
        tau_c,
        wrench,
        lambda_condition,
        regularized,
    })
}
