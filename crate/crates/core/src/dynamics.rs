//! Rigid-body dynamics of the arm and the whole-body model
//!
//! ```text
//! [M_v 0  ] q̈ + [D_v 0  ] q̇ + [0  ] = τ_c + τ_ext
//! [0   M_a]      [0   C_a]      [g_a]
//! ```
//!
//! Spatial vectors here are ordered `[angular; linear]` and expressed in the arm
//! base frame, referenced at its origin.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RobotModel, BASE_DOF};

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmDynamics {
    pub mass: DMatrix<f64>,
    pub coriolis: DMatrix<f64>,
    pub gravity: DVector<f64>,
}

/// Virtual mass and damping that turn base torques into velocity commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseVirtualParams {
    /// Diagonal of `M_v`: `[kg, kg, kg·m²]`.
    pub mass: [f64; 3],
    /// Diagonal of `D_v`.
    pub damping: [f64; 3],
}

impl Default for BaseVirtualParams {
    fn default() -> Self {
        // 105 kg is the platform mass; D_v = 10 M_v
        let mass = [105.0, 105.0, 21.0];
        Self {
            mass,
            damping: mass.map(|m| 10.0 * m),
        }
    }
}

impl BaseVirtualParams {
    pub fn validate(&self) -> Result<()> {
        if self.mass.iter().chain(&self.damping).all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config("base", "virtual mass and damping must be strictly positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WholeBodyDynamics {
    pub mass: DMatrix<f64>,
    /// `diag(D_v, C_a)`
    pub velocity_matrix: DMatrix<f64>,
    /// `[0; g_a]`
    pub gravity: DVector<f64>,
}

impl WholeBodyDynamics {
    /// `diag(D_v, C_a) · q̇`
    pub fn velocity_force(&self, dq: &DVector<f64>) -> DVector<f64> {
        &self.velocity_matrix * dq
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Motion cross-product operator `v×`.
fn crm(v: &Vector6<f64>) -> Matrix6<f64> {
    let w = skew(&Vector3::new(v[0], v[1], v[2]));
    let l = skew(&Vector3::new(v[3], v[4], v[5]));
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&l);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
    m
}

/// Force cross-product operator `v×* = -(v×)ᵀ`.
fn crf(v: &Vector6<f64>) -> Matrix6<f64> {
    -crm(v).transpose()
}

/// Spatial inertia about the frame origin of a body with mass `m`, center `c`
/// and rotational inertia `ic` about the center.
fn spatial_inertia(m: f64, c: &Vector3<f64>, ic: &Matrix3<f64>) -> Matrix6<f64> {
    let cx = skew(c);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ic + m * cx * cx.transpose()));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(m * cx));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * cx.transpose()));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
    out
}

/// Per-link quantities shared by the algorithms below.
struct Chain {
    /// Joint motion subspaces.
    axes: Vec<Vector6<f64>>,
    inertias: Vec<Matrix6<f64>>,
    /// Composite inertia of the subtree rooted at each link.
    composite: Vec<Matrix6<f64>>,
    coms: Vec<Vector3<f64>>,
    masses: Vec<f64>,
    armature: Vec<f64>,
}

impl Chain {
    fn new(model: &RobotModel, q_a: &[f64]) -> Result<Self> {
        let frames = model.arm_frames(q_a)?;
        let n = model.arm_dof();
        let mut axes = Vec::with_capacity(n);
        let mut inertias = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        for (j, f) in model.joints().iter().zip(&frames.links) {
            let a = f.rotation * j.axis.into_inner();
            let p = f.translation.vector;
            let lin = p.cross(&a);
            axes.push(Vector6::new(a.x, a.y, a.z, lin.x, lin.y, lin.z));
            let r = f.rotation.to_rotation_matrix();
            let c = f * nalgebra::Point3::from(j.com);
            let ic = r.matrix() * j.inertia * r.matrix().transpose();
            inertias.push(spatial_inertia(j.mass, &c.coords, &ic));
            coms.push(c.coords);
        }
        let mut composite = inertias.clone();
        for i in (0..n.saturating_sub(1)).rev() {
            composite[i] = composite[i] + composite[i + 1];
        }
        Ok(Self {
            axes,
            inertias,
            composite,
            coms,
            masses: model.joints().iter().map(|j| j.mass).collect(),
            armature: model.joints().iter().map(|j| j.armature).collect(),
        })
    }

    fn n(&self) -> usize {
        self.axes.len()
    }

    fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.axes[i].dot(&(self.composite[j] * self.axes[j]));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] += self.armature[i];
        }
        m
    }

    /// `∂M/∂q_k` for every `k`.
    fn mass_matrix_derivatives(&self) -> Vec<DMatrix<f64>> {
        let n = self.n();
        (0..n)
            .map(|k| {
                let sk = &self.axes[k];
                let xm = crm(sk);
                let xf = crf(sk);
                let ds: Vec<Vector6<f64>> = (0..n)
                    .map(|i| if i > k { xm * self.axes[i] } else { Vector6::zeros() })
                    .collect();
                let dic: Vec<Matrix6<f64>> = (0..n)
                    .map(|m| {
                        let ic = &self.composite[m.max(k)];
                        xf * ic - ic * xm
                    })
                    .collect();
                let mut d = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i..n {
                        let ic = &self.composite[j];
                        let v = ds[i].dot(&(ic * self.axes[j]))
                            + self.axes[i].dot(&(dic[j] * self.axes[j]))
                            + self.axes[i].dot(&(ic * ds[j]));
                        d[(i, j)] = v;
                        d[(j, i)] = v;
                    }
                }
                d
            })
            .collect()
    }

    fn gravity(&self, g: &Vector3<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(n);
        let mut force = Vector6::zeros();
        for i in (0..n).rev() {
            let f = g * self.masses[i];
            let t = self.coms[i].cross(&f);
            force += Vector6::new(t.x, t.y, t.z, f.x, f.y, f.z);
            out[i] = -self.axes[i].dot(&force);
        }
        out
    }

    /// Recursive Newton-Euler with zero joint acceleration: `C(q, q̇) q̇ + g(q)`.
    fn bias(&self, dq: &[f64], g: &Vector3<f64>) -> DVector<f64> {
        let n = self.n();
        let mut v = Vector6::zeros();
        let mut a = Vector6::new(0.0, 0.0, 0.0, -g.x, -g.y, -g.z);
        let mut forces = Vec::with_capacity(n);
        for i in 0..n {
            let vj = self.axes[i] * dq[i];
            v += vj;
            a += crm(&v) * vj;
            let iv = self.inertias[i] * v;
            forces.push(self.inertias[i] * a + crf(&v) * iv);
        }
        let mut out = DVector::zeros(n);
        let mut acc = Vector6::zeros();
        for i in (0..n).rev() {
            acc += forces[i];
            out[i] = self.axes[i].dot(&acc);
        }
        out
    }
}

/// Gravity vector of magnitude `gravity` in the arm-base frame.
pub fn arm_gravity_vector(model: &RobotModel, gravity: f64) -> Vector3<f64> {
    model.mount().rotation.inverse() * Vector3::new(0.0, 0.0, -gravity)
}

fn check(model: &RobotModel, q_a: &[f64], dq_a: &[f64]) -> Result<()> {
    if q_a.len() != model.arm_dof() {
        return Err(Error::dim("arm position", model.arm_dof(), q_a.len()));
    }
    if dq_a.len() != model.arm_dof() {
        return Err(Error::dim("arm velocity", model.arm_dof(), dq_a.len()));
    }
    Ok(())
}

/// Mass matrix, Christoffel-consistent Coriolis matrix and gravity torques of
/// the arm. `gravity` is the magnitude of gravitational acceleration (0 disables it).
pub fn arm_dynamics(model: &RobotModel, q_a: &[f64], dq_a: &[f64], gravity: f64) -> Result<ArmDynamics> {
    check(model, q_a, dq_a)?;
    let chain = Chain::new(model, q_a)?;
    let n = chain.n();
    let dm = chain.mass_matrix_derivatives();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * dq_a[k];
            }
            c[(i, j)] = s;
        }
    }
    Ok(ArmDynamics {
        mass: chain.mass_matrix(),
        coriolis: c,
        gravity: chain.gravity(&arm_gravity_vector(model, gravity)),
    })
}

pub fn arm_mass_matrix(model: &RobotModel, q_a: &[f64]) -> Result<DMatrix<f64>> {
    Ok(Chain::new(model, q_a)?.mass_matrix())
}

/// `∂M_a/∂q_k` for each arm joint `k`.
pub fn arm_mass_matrix_derivatives(model: &RobotModel, q_a: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    Ok(Chain::new(model, q_a)?.mass_matrix_derivatives())
}

pub fn arm_gravity(model: &RobotModel, q_a: &[f64], gravity: f64) -> Result<DVector<f64>> {
    Ok(Chain::new(model, q_a)?.gravity(&arm_gravity_vector(model, gravity)))
}

/// Velocity-product and gravity torques `C_a q̇_a + g_a` by recursive Newton-Euler.
pub fn arm_bias(model: &RobotModel, q_a: &[f64], dq_a: &[f64], gravity: f64) -> Result<DVector<f64>> {
    check(model, q_a, dq_a)?;
    Ok(Chain::new(model, q_a)?.bias(dq_a, &arm_gravity_vector(model, gravity)))
}

/// Mass matrix and bias in one pass, for the simulator's inner loop.
pub fn arm_mass_and_bias(
    model: &RobotModel,
    q_a: &[f64],
    dq_a: &[f64],
    gravity: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check(model, q_a, dq_a)?;
    let chain = Chain::new(model, q_a)?;
    Ok((chain.mass_matrix(), chain.bias(dq_a, &arm_gravity_vector(model, gravity))))
}

/// Arm accelerations from `M_a q̈ = τ - (C_a q̇ + g_a)`.
pub fn arm_forward_dynamics(
    model: &RobotModel,
    q_a: &[f64],
    dq_a: &[f64],
    tau: &DVector<f64>,
    gravity: f64,
) -> Result<DVector<f64>> {
    let (m, bias) = arm_mass_and_bias(model, q_a, dq_a, gravity)?;
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite("arm mass matrix"))?;
    Ok(chol.solve(&(tau - bias)))
}

/// Potential energy of the arm links relative to the arm-base origin.
pub fn arm_potential_energy(model: &RobotModel, q_a: &[f64], gravity: f64) -> Result<f64> {
    let chain = Chain::new(model, q_a)?;
    let g = arm_gravity_vector(model, gravity);
    Ok(chain
        .coms
        .iter()
        .zip(&chain.masses)
        .map(|(c, m)| -m * g.dot(c))
        .sum())
}

pub fn arm_kinetic_energy(model: &RobotModel, q_a: &[f64], dq_a: &[f64]) -> Result<f64> {
    check(model, q_a, dq_a)?;
    let m = arm_mass_matrix(model, q_a)?;
    let dq = DVector::from_column_slice(dq_a);
    Ok(0.5 * dq.dot(&(m * &dq)))
}

/// Block layout of the whole-body model: inertia `diag(M_v, M_a)`, velocity
/// matrix `diag(D_v, C_a)`, gravity `[0; g_a]`.
pub fn assemble_whole_body(arm: &ArmDynamics, base: &BaseVirtualParams) -> Result<WholeBodyDynamics> {
    let na = arm.mass.nrows();
    if arm.mass.ncols() != na || arm.coriolis.shape() != (na, na) {
        return Err(Error::dim("arm dynamics matrices", na, arm.coriolis.nrows()));
    }
    if arm.gravity.len() != na {
        return Err(Error::dim("arm gravity vector", na, arm.gravity.len()));
    }
    let n = BASE_DOF + na;
    let mut mass = DMatrix::zeros(n, n);
    let mut vel = DMatrix::zeros(n, n);
    for i in 0..BASE_DOF {
        mass[(i, i)] = base.mass[i];
        vel[(i, i)] = base.damping[i];
    }
    mass.view_mut((BASE_DOF, BASE_DOF), (na, na)).copy_from(&arm.mass);
    vel.view_mut((BASE_DOF, BASE_DOF), (na, na)).copy_from(&arm.coriolis);
    let mut gravity = DVector::zeros(n);
    gravity.rows_mut(BASE_DOF, na).copy_from(&arm.gravity);
    Ok(WholeBodyDynamics {
        mass,
        velocity_matrix: vel,
        gravity,
    })
}

/// Whole-body inertia `diag(M_v, M_a(q_a))` without the velocity terms.
pub fn whole_body_inertia(model: &RobotModel, q_a: &[f64], base: &BaseVirtualParams) -> Result<DMatrix<f64>> {
    let ma = arm_mass_matrix(model, q_a)?;
    let na = ma.nrows();
    let mut mass = DMatrix::zeros(BASE_DOF + na, BASE_DOF + na);
    for i in 0..BASE_DOF {
        mass[(i, i)] = base.mass[i];
    }
    mass.view_mut((BASE_DOF, BASE_DOF), (na, na)).copy_from(&ma);
    Ok(mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures, home_configuration};
    use approx::assert_relative_eq;

    #[test]
    fn pendulum_gravity_torque() {
        let m = fixtures::pendulum(1.0, 1.0);
        let g = arm_gravity(&m, &[0.0], STANDARD_GRAVITY).unwrap();
        assert_relative_eq!(g[0], 9.81, epsilon = 1e-12);
        let g = arm_gravity(&m, &[0.5], STANDARD_GRAVITY).unwrap();
        assert_relative_eq!(g[0], 9.81 * 0.5f64.cos(), epsilon = 1e-12);
    }

    #[test]
    fn zero_velocity_has_no_coriolis() {
        let m = RobotModel::moca_like();
        let qa = home_configuration(&m);
        let d = arm_dynamics(&m, &qa, &[0.0; 7], STANDARD_GRAVITY).unwrap();
        assert_eq!((&d.coriolis * DVector::zeros(7)).norm(), 0.0);
    }

    #[test]
    fn christoffel_matches_newton_euler() {
        let m = RobotModel::moca_like();
        let qa = [0.3, -0.5, 0.2, -1.8, 0.4, 1.5, -0.3];
        let dqa = [0.5, -0.2, 0.9, 0.1, -0.7, 0.3, 1.1];
        let d = arm_dynamics(&m, &qa, &dqa, STANDARD_GRAVITY).unwrap();
        let rnea = arm_bias(&m, &qa, &dqa, STANDARD_GRAVITY).unwrap();
        let route = &d.coriolis * DVector::from_column_slice(&dqa) + &d.gravity;
        assert_relative_eq!(route, rnea, epsilon = 1e-10);
    }

    #[test]
    fn whole_body_blocks() {
        let m = RobotModel::moca_like();
        let qa = home_configuration(&m);
        let arm = arm_dynamics(&m, &qa, &[0.1; 7], STANDARD_GRAVITY).unwrap();
        let wb = assemble_whole_body(&arm, &BaseVirtualParams::default()).unwrap();
        assert_eq!(wb.mass[(0, 0)], 105.0);
        assert_eq!(wb.mass[(2, 2)], 21.0);
        assert_eq!(wb.velocity_matrix[(1, 1)], 1050.0);
        for i in 0..3 {
            for j in 3..10 {
                assert_eq!(wb.mass[(i, j)], 0.0);
                assert_eq!(wb.mass[(j, i)], 0.0);
                assert_eq!(wb.velocity_matrix[(i, j)], 0.0);
            }
            assert_eq!(wb.gravity[i], 0.0);
        }
    }

    #[test]
    fn dimension_checks() {
        let m = RobotModel::moca_like();
        assert!(arm_dynamics(&m, &[0.0; 6], &[0.0; 6], 9.81).is_err());
        assert!(arm_bias(&m, &[0.0; 7], &[0.0; 6], 9.81).is_err());
    }

    #[test]
    fn zero_gravity_mode() {
        let m = RobotModel::kairos_like();
        let g = arm_gravity(&m, &home_configuration(&m), 0.0).unwrap();
        assert_eq!(g.norm(), 0.0);
    }
}
