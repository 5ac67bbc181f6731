//! Reference implementations used to cross-check the controllers and the
//! dynamics. Each one takes a deliberately different numerical route from the
//! production code: plain 4×4 matrix products, finite differences, dense KKT
//! systems and stacked least squares.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Rotation3, Vector3};

use crate::model::{JointState, RobotModel, BASE_DOF};

/// Rotation about a unit axis by Rodrigues' formula, as a homogeneous matrix.
fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix4<f64> {
    let k = axis.cross_matrix();
    let r = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
    let mut t = Matrix4::identity();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    t
}

fn planar(x: f64, y: f64, yaw: f64) -> Matrix4<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix4::new(
        c, -s, 0.0, x, //
        s, c, 0.0, y, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    )
}

/// Homogeneous transforms of every arm link in the arm-base frame, plus the tool.
pub fn arm_chain(model: &RobotModel, q_a: &[f64]) -> (Vec<Matrix4<f64>>, Matrix4<f64>) {
    let mut t = Matrix4::identity();
    let mut links = Vec::with_capacity(q_a.len());
    for (j, &qi) in model.joints().iter().zip(q_a) {
        t = t * j.origin.to_homogeneous() * rodrigues(&j.axis, qi);
        links.push(t);
    }
    let ee = t * model.tool().to_homogeneous();
    (links, ee)
}

/// End-effector transform in the world frame.
pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Matrix4<f64> {
    let (_, ee) = arm_chain(model, &q[BASE_DOF..]);
    planar(q[0], q[1], q[2]) * model.mount().to_homogeneous() * ee
}

/// Rotation vector of `r`, with the angle from `atan2` so that small rotations
/// keep full relative precision.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let s = v.norm();
    let c = (r.trace() - 1.0) * 0.5;
    let angle = s.atan2(c);
    if s < 1e-300 {
        return Vector3::zeros();
    }
    if angle > 3.0 {
        // near π the skew part vanishes; fall back to the full decomposition
        return Rotation3::from_matrix_unchecked(*r).scaled_axis();
    }
    v * (angle / s)
}

fn position(t: &Matrix4<f64>) -> Vector3<f64> {
    Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
}

fn rotation(t: &Matrix4<f64>) -> Matrix3<f64> {
    t.fixed_view::<3, 3>(0, 0).into_owned()
}

/// Central-difference whole-body Jacobian, rows `[linear; angular]`.
pub fn fd_jacobian(model: &RobotModel, q: &[f64], h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(6, n);
    for k in 0..n {
        let mut qp = q.to_vec();
        let mut qm = q.to_vec();
        qp[k] += h;
        qm[k] -= h;
        let tp = forward_kinematics(model, &qp);
        let tm = forward_kinematics(model, &qm);
        let dp = (position(&tp) - position(&tm)) / (2.0 * h);
        let w = rotation_log(&(rotation(&tp) * rotation(&tm).transpose())) / (2.0 * h);
        for r in 0..3 {
            jac[(r, k)] = dp[r];
            jac[(r + 3, k)] = w[r];
        }
    }
    jac
}

/// Central-difference arm Jacobian in the arm-base frame.
pub fn fd_arm_jacobian(model: &RobotModel, q_a: &[f64], h: f64) -> DMatrix<f64> {
    let n = q_a.len();
    let mut jac = DMatrix::zeros(6, n);
    for k in 0..n {
        let mut qp = q_a.to_vec();
        let mut qm = q_a.to_vec();
        qp[k] += h;
        qm[k] -= h;
        let (_, tp) = arm_chain(model, &qp);
        let (_, tm) = arm_chain(model, &qm);
        let dp = (position(&tp) - position(&tm)) / (2.0 * h);
        let w = rotation_log(&(rotation(&tp) * rotation(&tm).transpose())) / (2.0 * h);
        for r in 0..3 {
            jac[(r, k)] = dp[r];
            jac[(r + 3, k)] = w[r];
        }
    }
    jac
}

/// Arm mass matrix as `Σ mᵢ J_vᵢᵀ J_vᵢ + J_ωᵢᵀ Iᵢ J_ωᵢ` over link centers of mass,
/// plus armature on the diagonal.
pub fn mass_matrix(model: &RobotModel, q_a: &[f64]) -> DMatrix<f64> {
    let n = q_a.len();
    let (links, _) = arm_chain(model, q_a);
    let axes: Vec<(Vector3<f64>, Vector3<f64>)> = model
        .joints()
        .iter()
        .zip(&links)
        .map(|(j, t)| (rotation(t) * j.axis.into_inner(), position(t)))
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, (joint, t)) in model.joints().iter().zip(&links).enumerate() {
        let r = rotation(t);
        let c = position(t) + r * joint.com;
        let inertia = r * joint.inertia * r.transpose();
        let mut jv = DMatrix::zeros(3, n);
        let mut jw = DMatrix::zeros(3, n);
        for (k, (z, p)) in axes.iter().enumerate().take(i + 1) {
            jv.set_column(k, &z.cross(&(c - p)));
            jw.set_column(k, z);
        }
        let inertia = DMatrix::from_column_slice(3, 3, inertia.as_slice());
        m += jv.transpose() * &jv * joint.mass + jw.transpose() * inertia * &jw;
    }
    for (i, j) in model.joints().iter().enumerate() {
        m[(i, i)] += j.armature;
    }
    m
}

/// Potential energy of the arm links, heights measured along world `z` from the
/// arm base, with the base at rest at the origin.
pub fn potential_energy(model: &RobotModel, q_a: &[f64], gravity: f64) -> f64 {
    let (links, _) = arm_chain(model, q_a);
    let mount = model.mount().to_homogeneous();
    model
        .joints()
        .iter()
        .zip(&links)
        .map(|(j, t)| {
            let c = mount * t * j.com.push(1.0);
            j.mass * gravity * (c[2] - mount[(2, 3)])
        })
        .sum()
}

/// Gravity torques as the central-difference gradient of the potential energy.
pub fn fd_gravity(model: &RobotModel, q_a: &[f64], gravity: f64, h: f64) -> DVector<f64> {
    DVector::from_fn(q_a.len(), |k, _| {
        let mut qp = q_a.to_vec();
        let mut qm = q_a.to_vec();
        qp[k] += h;
        qm[k] -= h;
        (potential_energy(model, &qp, gravity) - potential_energy(model, &qm, gravity)) / (2.0 * h)
    })
}

/// `Ṁ = dM/dt` along `q̇` by a fourth-order central stencil on the mass-matrix
/// oracle.
pub fn fd_mass_rate(model: &RobotModel, q_a: &[f64], dq_a: &[f64], h: f64) -> DMatrix<f64> {
    let at = |s: f64| {
        let q: Vec<f64> = q_a.iter().zip(dq_a).map(|(q, v)| q + s * h * v).collect();
        mass_matrix(model, &q)
    };
    (at(-2.0) - at(2.0) + (at(1.0) - at(-1.0)) * 8.0) / (12.0 * h)
}

/// Solves `min ½ τᵀ Q τ` subject to `B τ = f` through the dense KKT system
/// `[Q Bᵀ; B 0] [τ; μ] = [0; f]`.
pub fn equality_qp(q: &DMatrix<f64>, b: &DMatrix<f64>, f: &DVector<f64>) -> Option<DVector<f64>> {
    let n = q.nrows();
    let m = b.nrows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(q);
    kkt.view_mut((0, n), (n, m)).copy_from(&b.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(b);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from(f);
    kkt.lu().solve(&rhs).map(|s| s.rows(0, n).into_owned())
}

/// Minimizer of `‖√W1 (J q̇ − r)‖² + ‖√W2 q̇‖²` from the stacked system
/// `[√W1 J; √W2] q̇ ≈ [√W1 r; 0]`, solved by SVD.
pub fn stacked_least_squares(j: &DMatrix<f64>, w1: &DVector<f64>, w2: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let (m, n) = j.shape();
    let mut a = DMatrix::zeros(m + n, n);
    let mut b = DVector::zeros(m + n);
    for i in 0..m {
        let s = w1[i].sqrt();
        for k in 0..n {
            a[(i, k)] = s * j[(i, k)];
        }
        b[i] = s * r[i];
    }
    for k in 0..n {
        a[(m + k, k)] = w2[k].sqrt();
    }
    a.svd(true, true).solve(&b, 1e-14).expect("SVD with U and V")
}

/// `I − Jᵀ (J Jᵀ)⁻¹ J` for a full-row-rank `J`.
pub fn nullspace_projector(j: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let jjt = j * j.transpose();
    let inv = jjt.try_inverse()?;
    Some(DMatrix::identity(j.ncols(), j.ncols()) - j.transpose() * inv * j)
}

/// Closed-form first-order response `v(t) = (f/d)(1 − e^{−t d/m})` from rest.
pub fn first_order_step(m: f64, d: f64, f: f64, t: f64) -> f64 {
    f / d * (1.0 - (-t * d / m).exp())
}

/// Arm state at rest as a whole-body state with the base at the origin.
pub fn state_with_arm(q_a: &[f64]) -> JointState {
    JointState::from_parts([0.0; 3], q_a)
}
