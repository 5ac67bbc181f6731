//! Kinematic description of a planar omnidirectional base carrying a serial arm.
//!
//! Joint ordering is base first (`x`, `y`, `yaw`), then arm joints from the
//! mount outwards. All Jacobians are geometric, expressed with rows
//! `[linear; angular]` and referenced at the end-effector point.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Translation3, Unit, UnitQuaternion, Vector3, Vector6,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Pose;

/// Base degrees of freedom: planar `x` [m], `y` [m] and `yaw` [rad].
pub const BASE_DOF: usize = 3;

const AXIS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmJoint {
    pub name: String,
    /// Parent link frame to joint frame, applied before the joint rotation.
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub mass: f64,
    /// Link center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
    /// Reflected rotor inertia added to the joint's diagonal mass entry.
    pub armature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    name: String,
    joints: Vec<ArmJoint>,
    mount: Isometry3<f64>,
    tool: Isometry3<f64>,
    arm_payload_limit: f64,
}

/// Whole-body joint positions and velocities, base first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

/// Link frames of the arm, expressed in the arm-base (mount) frame.
#[derive(Debug, Clone)]
pub struct ArmFrames {
    /// Frame of link `i` after applying joint `i`'s rotation.
    pub links: Vec<Isometry3<f64>>,
    pub ee: Isometry3<f64>,
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

impl JointState {
    pub fn new(mut q: DVector<f64>, dq: DVector<f64>) -> Result<Self> {
        if q.len() != dq.len() {
            return Err(Error::dim("joint velocity", q.len(), dq.len()));
        }
        if q.len() <= BASE_DOF {
            return Err(Error::dim("joint position", BASE_DOF + 1, q.len()));
        }
        q[2] = wrap_angle(q[2]);
        Ok(Self { q, dq })
    }

    pub fn at_rest(q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }

    /// Builds a state from base pose `(x, y, yaw)` and arm angles, at rest.
    pub fn from_parts(base: [f64; 3], arm: &[f64]) -> Self {
        let q = DVector::from_iterator(
            BASE_DOF + arm.len(),
            base.iter().copied().chain(arm.iter().copied()),
        );
        Self::at_rest(q).expect("arm must be non-empty")
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn base(&self) -> [f64; 3] {
        [self.q[0], self.q[1], self.q[2]]
    }

    pub fn arm(&self) -> DVector<f64> {
        self.q.rows(BASE_DOF, self.q.len() - BASE_DOF).into_owned()
    }

    pub fn arm_velocity(&self) -> DVector<f64> {
        self.dq.rows(BASE_DOF, self.dq.len() - BASE_DOF).into_owned()
    }

    pub fn wrap_yaw(&mut self) {
        self.q[2] = wrap_angle(self.q[2]);
    }
}

fn rot_x(a: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), a)
}

/// Fixed transform of a modified (Craig) DH row: `Rx(α) · Tx(a) · Tz(d)`.
fn craig_origin(a: f64, alpha: f64, d: f64) -> Isometry3<f64> {
    let r = rot_x(alpha);
    Isometry3::from_parts(Translation3::from(r * Vector3::new(a, 0.0, d)), r)
}

/// Fixed transform trailing a standard DH row: `Tz(d) · Tx(a) · Rx(α)`.
fn standard_origin(d: f64, a: f64, alpha: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(a, 0.0, d), rot_x(alpha))
}

fn box_joint(name: &str, origin: Isometry3<f64>, next: &Vector3<f64>, mass: f64, armature: f64) -> ArmJoint {
    // rod-like link from the joint to the next joint, radius 5 cm
    let r2 = 0.05 * 0.05;
    ArmJoint {
        name: name.to_string(),
        origin,
        axis: Vector3::z_axis(),
        mass,
        com: next * 0.5,
        inertia: Matrix3::from_diagonal(&Vector3::new(mass * r2, mass * r2, mass * r2)),
        armature,
    }
}

impl RobotModel {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<ArmJoint>,
        mount: Isometry3<f64>,
        tool: Isometry3<f64>,
        arm_payload_limit: f64,
    ) -> Result<Self> {
        let model = Self {
            name: name.into(),
            joints,
            mount,
            tool,
            arm_payload_limit,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidModel("arm has no joints".into()));
        }
        if !(self.arm_payload_limit > 0.0) {
            return Err(Error::InvalidModel("arm_payload_limit must be positive".into()));
        }
        for j in &self.joints {
            if (j.axis.norm() - 1.0).abs() > AXIS_TOL {
                return Err(Error::InvalidModel(format!("joint `{}` axis is not unit", j.name)));
            }
            if !(j.mass > 0.0) {
                return Err(Error::InvalidModel(format!("joint `{}` mass must be positive", j.name)));
            }
            if !(j.armature >= 0.0) {
                return Err(Error::InvalidModel(format!("joint `{}` armature is negative", j.name)));
            }
            let i = &j.inertia;
            if (i - i.transpose()).abs().max() > 1e-12 || i.cholesky().is_none() {
                return Err(Error::InvalidModel(format!(
                    "joint `{}` inertia is not symmetric positive definite",
                    j.name
                )));
            }
        }
        Ok(())
    }

    /// Checks the arm is one of the supported platform shapes (6 or 7 joints).
    pub fn validate_platform(&self) -> Result<()> {
        match self.arm_dof() {
            6 | 7 => Ok(()),
            n => Err(Error::InvalidModel(format!(
                "platform arms have 6 or 7 joints, `{}` has {n}",
                self.name
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[ArmJoint] {
        &self.joints
    }

    pub fn mount(&self) -> &Isometry3<f64> {
        &self.mount
    }

    pub fn tool(&self) -> &Isometry3<f64> {
        &self.tool
    }

    pub fn arm_payload_limit(&self) -> f64 {
        self.arm_payload_limit
    }

    pub fn arm_dof(&self) -> usize {
        self.joints.len()
    }

    pub fn dof(&self) -> usize {
        BASE_DOF + self.joints.len()
    }

    pub fn total_arm_mass(&self) -> f64 {
        self.joints.iter().map(|j| j.mass).sum()
    }

    fn check_state(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::dim("joint state", self.dof(), q.len()));
        }
        Ok(())
    }

    fn check_arm(&self, q_a: &[f64]) -> Result<()> {
        if q_a.len() != self.arm_dof() {
            return Err(Error::dim("arm joint vector", self.arm_dof(), q_a.len()));
        }
        Ok(())
    }

    /// World pose of the base frame for base coordinates `(x, y, yaw)`.
    pub fn base_frame(base: [f64; 3]) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(base[0], base[1], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), base[2]),
        )
    }

    /// Link frames in the arm-base frame.
    pub fn arm_frames(&self, q_a: &[f64]) -> Result<ArmFrames> {
        self.check_arm(q_a)?;
        let mut t = Isometry3::identity();
        let mut links = Vec::with_capacity(self.joints.len());
        for (j, &qi) in self.joints.iter().zip(q_a) {
            t = t * j.origin * UnitQuaternion::from_axis_angle(&j.axis, qi);
            links.push(t);
        }
        Ok(ArmFrames { links, ee: t * self.tool })
    }

    pub fn forward_kinematics(&self, state: &JointState) -> Result<Pose> {
        self.check_state(&state.q)?;
        let q_a: Vec<f64> = state.arm().iter().copied().collect();
        let frames = self.arm_frames(&q_a)?;
        let world = Self::base_frame(state.base()) * self.mount * frames.ee;
        Ok(Pose::from_isometry(&world))
    }

    /// End-effector pose relative to the arm base.
    pub fn arm_forward_kinematics(&self, q_a: &[f64]) -> Result<Pose> {
        Ok(Pose::from_isometry(&self.arm_frames(q_a)?.ee))
    }

    /// Geometric Jacobian columns of the arm for frames already expressed in some
    /// common frame, referenced at point `p`.
    fn arm_columns(&self, prefix: &Isometry3<f64>, frames: &ArmFrames, p: &Vector3<f64>, out: &mut DMatrix<f64>, col0: usize) {
        for (i, (j, link)) in self.joints.iter().zip(&frames.links).enumerate() {
            let frame = prefix * link;
            let z = frame.rotation * j.axis.into_inner();
            let o = frame.translation.vector;
            let lin = z.cross(&(p - o));
            let col = Vector6::new(lin.x, lin.y, lin.z, z.x, z.y, z.z);
            out.set_column(col0 + i, &col);
        }
    }

    /// 6×n whole-body Jacobian in the world frame.
    pub fn whole_body_jacobian(&self, state: &JointState) -> Result<DMatrix<f64>> {
        self.check_state(&state.q)?;
        let q_a: Vec<f64> = state.arm().iter().copied().collect();
        let frames = self.arm_frames(&q_a)?;
        let base = state.base();
        let prefix = Self::base_frame(base) * self.mount;
        let p = (prefix * frames.ee).translation.vector;

        let mut jac = DMatrix::zeros(6, self.dof());
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        // yaw about the vertical through the base origin
        jac[(0, 2)] = -(p.y - base[1]);
        jac[(1, 2)] = p.x - base[0];
        jac[(5, 2)] = 1.0;
        self.arm_columns(&prefix, &frames, &p, &mut jac, BASE_DOF);
        Ok(jac)
    }

    /// 6×n_a arm Jacobian in the arm-base frame.
    pub fn arm_jacobian(&self, q_a: &[f64]) -> Result<DMatrix<f64>> {
        let frames = self.arm_frames(q_a)?;
        let p = frames.ee.translation.vector;
        let mut jac = DMatrix::zeros(6, self.arm_dof());
        self.arm_columns(&Isometry3::identity(), &frames, &p, &mut jac, 0);
        Ok(jac)
    }

    /// Replaces the last link's inertial properties with those of the link plus a
    /// point mass at the tool point.
    pub fn with_tool_payload(&self, mass: f64) -> RobotModel {
        if mass <= 0.0 {
            return self.clone();
        }
        let mut m = self.clone();
        let tool_p = self.tool.translation.vector;
        let last = m.joints.last_mut().expect("non-empty arm");
        let total = last.mass + mass;
        let com = (last.com * last.mass + tool_p * mass) / total;
        // parallel axis for both bodies about the new center
        let shift = |m: f64, r: Vector3<f64>| m * (Matrix3::identity() * r.dot(&r) - r * r.transpose());
        last.inertia = last.inertia + shift(last.mass, last.com - com) + shift(mass, tool_p - com);
        last.inertia = (last.inertia + last.inertia.transpose()) * 0.5;
        last.mass = total;
        last.com = com;
        m
    }

    /// 7-DoF arm with the link layout of a common torque-controlled cobot,
    /// mounted 0.5 m above the base center. Payload limit 3 kg.
    pub fn moca_like() -> RobotModel {
        // (a_{i-1}, alpha_{i-1}, d_i)
        let rows = [
            (0.0, 0.0, 0.333),
            (0.0, -FRAC_PI_2, 0.0),
            (0.0, FRAC_PI_2, 0.316),
            (0.0825, FRAC_PI_2, 0.0),
            (-0.0825, -FRAC_PI_2, 0.384),
            (0.0, FRAC_PI_2, 0.0),
            (0.088, FRAC_PI_2, 0.0),
        ];
        let masses = [4.97, 0.646, 3.228, 3.587, 1.225, 1.666, 1.47];
        let origins: Vec<_> = rows.iter().map(|&(a, al, d)| craig_origin(a, al, d)).collect();
        // flange plus hand
        let tool = craig_origin(0.0, 0.0, 0.107 + 0.1034);
        let joints = (0..7)
            .map(|i| {
                let next = if i + 1 < 7 { origins[i + 1].translation.vector } else { tool.translation.vector };
                box_joint(&format!("joint{}", i + 1), origins[i], &next, masses[i], 0.1)
            })
            .collect();
        RobotModel::new(
            "moca-like",
            joints,
            Isometry3::translation(0.0, 0.0, 0.5),
            tool,
            3.0 * 9.81,
        )
        .expect("built-in model is valid")
    }

    /// 6-DoF high-payload arm (standard DH link layout of a 16 kg industrial
    /// cobot), mounted 0.5 m above the base center. Payload limit 16 kg.
    pub fn kairos_like() -> RobotModel {
        // (d, a, alpha) per standard DH row
        let rows = [
            (0.1807, 0.0, FRAC_PI_2),
            (0.0, -0.4784, 0.0),
            (0.0, -0.36, 0.0),
            (0.17415, 0.0, FRAC_PI_2),
            (0.11985, 0.0, -FRAC_PI_2),
            (0.11655, 0.0, 0.0),
        ];
        let masses = [7.369, 10.45, 4.321, 2.18, 2.033, 0.907];
        let trailing: Vec<_> = rows.iter().map(|&(d, a, al)| standard_origin(d, a, al)).collect();
        // hand on the flange
        let hand = Isometry3::translation(0.0, 0.0, 0.15);
        let joints = (0..6)
            .map(|i| {
                let origin = if i == 0 { Isometry3::identity() } else { trailing[i - 1] };
                let next = if i + 1 < 6 { trailing[i].translation.vector } else { (trailing[5] * hand).translation.vector };
                box_joint(&format!("joint{}", i + 1), origin, &next, masses[i], 0.2)
            })
            .collect();
        RobotModel::new(
            "kairos-like",
            joints,
            Isometry3::translation(0.0, 0.0, 0.5),
            trailing[5] * hand,
            16.0 * 9.81,
        )
        .expect("built-in model is valid")
    }

    pub fn builtin(name: &str) -> Option<RobotModel> {
        match name {
            "moca-like" => Some(Self::moca_like()),
            "kairos-like" => Some(Self::kairos_like()),
            _ => None,
        }
    }

    pub fn from_toml_str(src: &str) -> Result<RobotModel> {
        let file: ModelFile =
            toml::from_str(src).map_err(|e| Error::InvalidModel(e.to_string()))?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RobotModel> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ModelFile::from_model(self)).expect("model serializes")
    }
}

/// Ready poses used as scenario starting configurations.
pub fn home_configuration(model: &RobotModel) -> Vec<f64> {
    match model.arm_dof() {
        7 => vec![0.0, -0.3, 0.0, -2.2, 0.0, 2.0, 0.785],
        6 => vec![0.0, -1.9, -1.6, -1.2, FRAC_PI_2, 0.0],
        n => vec![0.3; n],
    }
}

/// Small models used by unit tests and property checks.
pub mod fixtures {
    use super::*;

    /// Two revolute joints about the vertical, unit links along `x`, mounted at
    /// height `h_mount`.
    pub fn planar_two_link(h_mount: f64) -> RobotModel {
        let link = |name: &str, origin: Isometry3<f64>| ArmJoint {
            name: name.into(),
            origin,
            axis: Vector3::z_axis(),
            mass: 1.0,
            com: Vector3::new(0.5, 0.0, 0.0),
            inertia: Matrix3::from_diagonal_element(0.01),
            armature: 0.0,
        };
        RobotModel::new(
            "planar-2link",
            vec![
                link("j1", Isometry3::identity()),
                link("j2", Isometry3::translation(1.0, 0.0, 0.0)),
            ],
            Isometry3::translation(0.0, 0.0, h_mount),
            Isometry3::translation(1.0, 0.0, 0.0),
            100.0,
        )
        .expect("fixture is valid")
    }

    /// Single link of mass `m` with its center at distance `l` along `x`, rotating
    /// about a horizontal axis (`-y`) so that positive angles raise the mass.
    pub fn pendulum(m: f64, l: f64) -> RobotModel {
        RobotModel::new(
            "pendulum",
            vec![ArmJoint {
                name: "j1".into(),
                origin: Isometry3::identity(),
                axis: -Vector3::y_axis(),
                mass: m,
                com: Vector3::new(l, 0.0, 0.0),
                inertia: Matrix3::from_diagonal_element(1e-3),
                armature: 0.0,
            }],
            Isometry3::identity(),
            Isometry3::translation(l, 0.0, 0.0),
            100.0,
        )
        .expect("fixture is valid")
    }
}

/// Geometric manipulability `√det(J Jᵀ)`. Determinants within round-off of zero
/// (`|det| < 1e-14`) are treated as exactly singular.
pub fn manipulability(j: &DMatrix<f64>) -> f64 {
    let det = (j * j.transpose()).determinant();
    if det.abs() < 1e-14 {
        return 0.0;
    }
    det.max(0.0).sqrt()
}

// ---- declarative model file ----

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameSpec {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl FrameSpec {
    fn to_iso(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.xyz[0], self.xyz[1], self.xyz[2]),
            UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]),
        )
    }

    fn from_iso(iso: &Isometry3<f64>) -> Self {
        let (r, p, y) = iso.rotation.euler_angles();
        let t = iso.translation.vector;
        Self {
            xyz: [t.x, t.y, t.z],
            rpy: [r, p, y],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointSpec {
    name: String,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    mass: f64,
    com: [f64; 3],
    /// `[ixx, iyy, izz, ixy, ixz, iyz]`
    inertia: [f64; 6],
    #[serde(default)]
    armature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    name: String,
    arm_payload_limit: f64,
    mount: FrameSpec,
    tool: FrameSpec,
    joint: Vec<JointSpec>,
}

impl ModelFile {
    fn into_model(self) -> Result<RobotModel> {
        let joints = self
            .joint
            .into_iter()
            .map(|j| {
                let axis = Vector3::from(j.axis);
                if (axis.norm() - 1.0).abs() > AXIS_TOL {
                    return Err(Error::InvalidModel(format!("joint `{}` axis is not unit", j.name)));
                }
                let [xx, yy, zz, xy, xz, yz] = j.inertia;
                Ok(ArmJoint {
                    origin: FrameSpec { xyz: j.xyz, rpy: j.rpy }.to_iso(),
                    axis: Unit::new_unchecked(axis),
                    mass: j.mass,
                    com: Vector3::from(j.com),
                    inertia: Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz),
                    armature: j.armature,
                    name: j.name,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RobotModel::new(self.name, joints, self.mount.to_iso(), self.tool.to_iso(), self.arm_payload_limit)
    }

    fn from_model(m: &RobotModel) -> Self {
        Self {
            name: m.name.clone(),
            arm_payload_limit: m.arm_payload_limit,
            mount: FrameSpec::from_iso(&m.mount),
            tool: FrameSpec::from_iso(&m.tool),
            joint: m
                .joints
                .iter()
                .map(|j| {
                    let f = FrameSpec::from_iso(&j.origin);
                    let i = &j.inertia;
                    JointSpec {
                        name: j.name.clone(),
                        xyz: f.xyz,
                        rpy: f.rpy,
                        axis: [j.axis.x, j.axis.y, j.axis.z],
                        mass: j.mass,
                        com: [j.com.x, j.com.y, j.com.z],
                        inertia: [i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]],
                        armature: j.armature,
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn planar_straight_chain() {
        let m = fixtures::planar_two_link(0.5);
        let s = JointState::from_parts([0.0; 3], &[0.0, 0.0]);
        let p = m.forward_kinematics(&s).unwrap();
        assert_relative_eq!(p.position, Vector3::new(2.0, 0.0, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn base_transform_composes() {
        let m = fixtures::planar_two_link(0.5);
        let s = JointState::from_parts([1.0, 2.0, FRAC_PI_2], &[0.0, 0.0]);
        let p = m.forward_kinematics(&s).unwrap();
        // tip at (2,0) rotated by 90° then shifted by (1,2)
        assert_relative_eq!(p.position, Vector3::new(1.0, 4.0, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = fixtures::planar_two_link(0.0);
        let s = JointState::from_parts([0.0; 3], &[0.0, 0.0, 0.0]);
        assert!(matches!(m.forward_kinematics(&s), Err(Error::Dimension { .. })));
        assert!(matches!(m.whole_body_jacobian(&s), Err(Error::Dimension { .. })));
        assert!(m.arm_jacobian(&[0.0]).is_err());
    }

    #[test]
    fn base_columns() {
        let m = RobotModel::moca_like();
        let s = JointState::from_parts([0.3, -0.2, 0.7], &home_configuration(&m));
        let j = m.whole_body_jacobian(&s).unwrap();
        let col = |c: usize| j.column(c).into_owned();
        assert_eq!(col(0), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(col(1), DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(j.fixed_view::<3, 1>(3, 2).into_owned(), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn arm_jacobian_matches_whole_body_at_identity_base() {
        for m in [RobotModel::moca_like(), RobotModel::kairos_like()] {
            let qa = home_configuration(&m);
            let s = JointState::from_parts([0.0; 3], &qa);
            let jw = m.whole_body_jacobian(&s).unwrap();
            let ja = m.arm_jacobian(&qa).unwrap();
            assert_relative_eq!(jw.columns(BASE_DOF, m.arm_dof()).into_owned(), ja, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_link_planar_determinant() {
        let m = fixtures::planar_two_link(0.0);
        let ja = m.arm_jacobian(&[0.3, FRAC_PI_2]).unwrap();
        let planar = ja.view((0, 0), (2, 2)).into_owned();
        assert_relative_eq!(planar.determinant().abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(manipulability(&planar), 1.0, epsilon = 1e-12);
        let straight = m.arm_jacobian(&[0.3, 0.0]).unwrap().view((0, 0), (2, 2)).into_owned();
        assert_eq!(manipulability(&straight), 0.0);
    }

    #[test]
    fn yaw_wraps_into_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        let s = JointState::from_parts([0.0, 0.0, 7.0], &[0.0, 0.0]);
        assert!(s.q[2] > -PI && s.q[2] <= PI);
    }

    #[test]
    fn model_file_round_trip() {
        let m = RobotModel::kairos_like();
        let back = RobotModel::from_toml_str(&m.to_toml_string()).unwrap();
        let qa = home_configuration(&m);
        let a = m.arm_forward_kinematics(&qa).unwrap();
        let b = back.arm_forward_kinematics(&qa).unwrap();
        assert_relative_eq!(a.position, b.position, epsilon = 1e-12);
        assert_eq!(back.arm_dof(), 6);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let src = RobotModel::moca_like().to_toml_string();
        let bad = src.replacen("mass = 4.97", "mass = -1.0", 1);
        assert!(RobotModel::from_toml_str(&bad).is_err());
        let bad_axis = src.replacen("axis = [0.0, 0.0, 1.0]", "axis = [0.0, 0.0, 1.1]", 1);
        assert!(RobotModel::from_toml_str(&bad_axis).is_err());
        assert!(fixtures::planar_two_link(0.0).validate_platform().is_err());
        assert!(RobotModel::moca_like().validate_platform().is_ok());
    }

    #[test]
    fn tool_payload_keeps_total_mass() {
        let m = RobotModel::kairos_like();
        let p = m.with_tool_payload(10.0);
        assert_relative_eq!(p.total_arm_mass(), m.total_arm_mass() + 10.0, epsilon = 1e-12);
    }
}
