//! Property groups checked against the reference implementations in
//! [`crate::oracle`]. Each check reports the number of cases, the worst residual
//! and the tolerance it was held to.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, BaseVirtualParams, STANDARD_GRAVITY};
use crate::error::{Error, Result};
use crate::interface::{AdmittanceParams, Button, InterfaceState, Priority};
use crate::kairos::{self, ClikGains, ClikParams};
use crate::model::{fixtures, home_configuration, manipulability, JointState, RobotModel, BASE_DOF};
use crate::moca::{self, ImpedanceGains};
use crate::oracle;
use crate::sim::{self, world};
use crate::spatial::{Pose, Twist, Wrench};

pub const GROUPS: [&str; 7] = ["kinematics", "dynamics", "admittance", "impedance", "nullspace", "clik", "sim"];

/// Deliberate defects used to show that a group can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Negates the null-space posture torque before it is used.
    FlipNullspaceTorque,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub mutation: Option<Mutation>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 7, mutation: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub group: String,
    pub check: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(group: &str, check: &str, cases: usize, max_residual: f64, tolerance: f64) -> Self {
        Self {
            group: group.into(),
            check: check.into(),
            cases,
            max_residual,
            tolerance,
            passed: max_residual.is_finite() && max_residual <= tolerance,
        }
    }
}

/// Runs the named groups (all when `groups` is empty), one thread per group,
/// results in [`GROUPS`] order.
pub fn run(groups: &[String], opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    for g in groups {
        if !GROUPS.contains(&g.as_str()) {
            return Err(Error::config("group", format!("unknown group `{g}`; groups: {}", GROUPS.join(", "))));
        }
    }
    let selected: Vec<&str> = GROUPS
        .iter()
        .copied()
        .filter(|g| groups.is_empty() || groups.iter().any(|s| s == g))
        .collect();
    let outcomes: Vec<Result<Vec<CheckResult>>> = std::thread::scope(|s| {
        let handles: Vec<_> = selected.iter().map(|g| s.spawn(move || run_group(g, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("verify thread panicked")).collect()
    });
    let mut out = Vec::new();
    for o in outcomes {
        out.extend(o?);
    }
    Ok(out)
}

pub fn run_group(group: &str, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    match group {
        "kinematics" => kinematics(&mut rng),
        "dynamics" => dynamics_group(&mut rng),
        "admittance" => admittance(&mut rng),
        "impedance" => impedance(&mut rng),
        "nullspace" => nullspace(&mut rng, opts),
        "clik" => clik(&mut rng),
        "sim" => sim_group(),
        other => Err(Error::config("group", format!("unknown group `{other}`; groups: {}", GROUPS.join(", ")))),
    }
}

fn models() -> [RobotModel; 2] {
    [RobotModel::moca_like(), RobotModel::kairos_like()]
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

fn random_arm(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, -PI, PI)).collect()
}

fn random_state(rng: &mut ChaCha8Rng, model: &RobotModel) -> JointState {
    let base = [uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0), uniform(rng, -PI, PI)];
    JointState::from_parts(base, &random_arm(rng, model.arm_dof()))
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng, sigma))
}

fn random_wrench(rng: &mut ChaCha8Rng) -> Wrench {
    Wrench::new(
        Vector3::from_fn(|_, _| normal(rng, 50.0)),
        Vector3::from_fn(|_, _| normal(rng, 5.0)),
    )
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::from_fn(|_, _| normal(rng, 1.0));
    Pose::new(
        Vector3::from_fn(|_, _| uniform(rng, -1.0, 1.0)),
        UnitQuaternion::from_scaled_axis(axis.normalize() * uniform(rng, 0.0, 3.0)),
    )
}

fn position(t: &nalgebra::Matrix4<f64>) -> Vector3<f64> {
    Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
}

fn rotation(t: &nalgebra::Matrix4<f64>) -> nalgebra::Matrix3<f64> {
    t.fixed_view::<3, 3>(0, 0).into_owned()
}

// ---- kinematics ----

fn kinematics(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const G: &str = "kinematics";
    let mut out = Vec::new();

    // forward kinematics against plain 4×4 products
    let mut fk_res: f64 = 0.0;
    let mut cases = 0;
    for m in models() {
        for _ in 0..500 {
            let s = random_state(rng, &m);
            let pose = m.forward_kinematics(&s)?;
            let t = oracle::forward_kinematics(&m, s.q.as_slice());
            let rot = pose.orientation.to_rotation_matrix();
            fk_res = fk_res
                .max((pose.position - position(&t)).amax())
                .max((rot.matrix() - rotation(&t)).amax());
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "forward kinematics vs homogeneous products", cases, fk_res, 1e-12));

    // J·q̇ against central differences of the oracle forward kinematics
    let h = 1e-6;
    let mut jac_res: f64 = 0.0;
    cases = 0;
    for m in models() {
        for _ in 0..500 {
            let s = random_state(rng, &m);
            let dq = random_vector(rng, m.dof(), 1.0);
            let j = m.whole_body_jacobian(&s)?;
            let v = &j * &dq;
            let qp: Vec<f64> = s.q.iter().zip(dq.iter()).map(|(q, d)| q + h * d).collect();
            let qm: Vec<f64> = s.q.iter().zip(dq.iter()).map(|(q, d)| q - h * d).collect();
            let tp = oracle::forward_kinematics(&m, &qp);
            let tm = oracle::forward_kinematics(&m, &qm);
            let lin = (position(&tp) - position(&tm)) / (2.0 * h);
            let ang = oracle::rotation_log(&(rotation(&tp) * rotation(&tm).transpose())) / (2.0 * h);
            let fd = Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z);
            let res = (Vector6::from_column_slice(v.as_slice()) - fd).amax();
            jac_res = jac_res.max(res);
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "J dq vs finite-difference forward kinematics", cases, jac_res, 1e-6));

    // manipulability depends on the arm only, bit for bit
    let mut inv_res: f64 = 0.0;
    cases = 0;
    for m in models() {
        for _ in 0..200 {
            let s = random_state(rng, &m);
            let moved = JointState::from_parts([uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0), uniform(rng, -PI, PI)], s.arm().as_slice());
            let a = manipulability(&m.arm_jacobian(s.arm().as_slice())?);
            let b = manipulability(&m.arm_jacobian(moved.arm().as_slice())?);
            if a.to_bits() != b.to_bits() {
                inv_res = inv_res.max((a - b).abs().max(f64::MIN_POSITIVE));
            }
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "manipulability invariant to base pose", cases, inv_res, 0.0));

    // two-link arm: singular only when stretched
    let two = fixtures::planar_two_link(0.0);
    let planar = |q: &[f64]| -> Result<f64> {
        let j = two.arm_jacobian(q)?;
        Ok(manipulability(&j.view((0, 0), (2, 2)).into_owned()))
    };
    let mut two_res = planar(&[0.4, 0.0])?;
    cases = 1;
    for _ in 0..1000 {
        let q2 = uniform(rng, -PI, PI);
        if q2.sin().abs() > 0.05 {
            let w = planar(&[uniform(rng, -PI, PI), q2])?;
            if w <= 0.0 {
                two_res = two_res.max(1.0);
            }
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "two-link manipulability zero only when outstretched", cases, two_res, 0.0));

    // unit quaternions over many evaluations
    let mut norm_res: f64 = 0.0;
    cases = 0;
    for m in models() {
        for _ in 0..500_000 {
            let s = random_state(rng, &m);
            let p = m.forward_kinematics(&s)?;
            norm_res = norm_res.max((p.orientation.quaternion().norm() - 1.0).abs());
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "end-effector quaternion unit norm", cases, norm_res, 1e-9));
    Ok(out)
}

// ---- dynamics ----

fn dynamics_group(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const G: &str = "dynamics";
    let mut out = Vec::new();

    let mut mass_res: f64 = 0.0;
    let mut skew_res: f64 = 0.0;
    let mut grav_res: f64 = 0.0;
    let mut cases = 0;
    for m in models() {
        for _ in 0..500 {
            let qa = random_arm(rng, m.arm_dof());
            let dqa: Vec<f64> = (0..m.arm_dof()).map(|_| normal(rng, 1.0)).collect();
            let d = dynamics::arm_dynamics(&m, &qa, &dqa, STANDARD_GRAVITY)?;
            let scale = d.mass.amax().max(1.0);
            mass_res = mass_res.max((&d.mass - oracle::mass_matrix(&m, &qa)).amax() / scale);
            // Ṁ − 2C is skew-symmetric
            let n = oracle::fd_mass_rate(&m, &qa, &dqa, 1e-5) - &d.coriolis * 2.0;
            skew_res = skew_res.max((&n + n.transpose()).amax());
            let fd = oracle::fd_gravity(&m, &qa, STANDARD_GRAVITY, 1e-6);
            grav_res = grav_res.max((&d.gravity - fd).amax());
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "mass matrix vs Jacobian-sum oracle (relative)", cases, mass_res, 1e-10));
    out.push(CheckResult::new(G, "skew symmetry of Mdot - 2C", cases, skew_res, 1e-8));
    out.push(CheckResult::new(G, "gravity vs potential-energy gradient", cases, grav_res, 1e-6));

    // free arm over 1 s at dt = 1e-4, energy measured from the floor
    let mut drift: f64 = 0.0;
    cases = 0;
    for m in models() {
        for _ in 0..2 {
            let mut q0 = home_configuration(&m);
            for q in q0.iter_mut() {
                *q += uniform(rng, -0.8, 0.8);
            }
            let dq0 = vec![0.0; m.arm_dof()];
            let e = world::free_arm_energy(&m, &q0, &dq0, STANDARD_GRAVITY, 1e-4, 10_000)?;
            let worst = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max);
            drift = drift.max(worst / e[0].abs());
            cases += 1;
        }
    }
    out.push(CheckResult::new(G, "free-arm energy drift over 1 s", cases, drift, 1e-3));
    Ok(out)
}

// ---- admittance ----

fn admittance_trajectory(p: &AdmittanceParams, f: &Wrench, dt: f64, samples: &[f64]) -> Result<Vec<f64>> {
    let q = JointState::from_parts([0.0; 3], &[0.0]);
    let mut s = InterfaceState::new(Pose::identity(), &q);
    let mut out = Vec::with_capacity(samples.len());
    let mut t = 0.0;
    let mut step = 0u64;
    for &ts in samples {
        while t < ts - 1e-12 {
            s = s.admittance_step(p, f, dt)?;
            step += 1;
            t = step as f64 * dt;
        }
        out.push(s.x_d.position.x);
    }
    Ok(out)
}

fn admittance(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const G: &str = "admittance";
    let mut out = Vec::new();
    let p = AdmittanceParams::default();

    // steady state after ten time constants
    let mut ss_res: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let w = random_wrench(rng);
        let lam = w.to_vector();
        let q = JointState::from_parts([0.0; 3], &[0.0]);
        let mut s = InterfaceState::new(Pose::identity(), &q);
        s.motion_mode = crate::interface::MotionMode::RotoTranslation;
        let tau = p.mass.iter().zip(&p.damping).map(|(m, d)| m / d).fold(0.0, f64::max);
        let steps = (10.0 * tau / 1e-3).ceil() as usize;
        for _ in 0..steps {
            s = s.admittance_step(&p, &w, 1e-3)?;
        }
        let v = s.dx_d.to_vector();
        for i in 0..6 {
            let ss = lam[i] / p.damping[i];
            ss_res = ss_res.max((v[i] - ss).abs() / ss.abs().max(1e-9));
        }
        cases += 1;
    }
    out.push(CheckResult::new(G, "steady-state velocity D^-1 lambda", cases, ss_res, 1e-3));

    // first-order convergence in dt
    let f = Wrench::new(Vector3::new(20.0, 0.0, 0.0), Vector3::zeros());
    let samples: Vec<f64> = (1..=100).map(|i| i as f64 * 0.01).collect();
    let a = admittance_trajectory(&p, &f, 1e-2, &samples)?;
    let b = admittance_trajectory(&p, &f, 5e-3, &samples)?;
    let c = admittance_trajectory(&p, &f, 2.5e-3, &samples)?;
    let e1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let e2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    out.push(CheckResult::new(G, "first-order convergence ratio (|ratio - 2|)", 3, (e1 / e2 - 2.0).abs(), 0.3));

    // inactive admittance freezes x_d; q_pref only moves on a manipulation→locomotion P
    let mut frozen_res: f64 = 0.0;
    let mut pref_res: f64 = 0.0;
    cases = 0;
    for _ in 0..200 {
        let q = JointState::from_parts([0.0; 3], &random_arm(rng, 7));
        let mut s = InterfaceState::new(random_pose(rng), &q);
        s.admittance_active = false;
        let x0 = s.x_d;
        for _ in 0..50 {
            s = s.admittance_step(&p, &random_wrench(rng), 1e-3)?;
        }
        if s.x_d.to_array().iter().zip(x0.to_array()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            frozen_res = 1.0;
        }

        let mut s = InterfaceState::new(random_pose(rng), &q);
        for _ in 0..30 {
            let button = [Button::A, Button::M, Button::G, Button::P][rng.random_range(0..4)];
            let cur = JointState::from_parts([0.0; 3], &random_arm(rng, 7));
            let before = s.clone();
            s = s.handle_button(button, &cur, &random_pose(rng));
            let expected = if button == Button::P && before.priority == Priority::Manipulation {
                cur.q.clone()
            } else {
                before.q_pref.clone()
            };
            pref_res = pref_res.max((&s.q_pref - expected).amax());
        }
        cases += 1;
    }
    out.push(CheckResult::new(G, "inactive admittance holds x_d bit-exact", cases, frozen_res, 0.0));
    out.push(CheckResult::new(G, "q_pref changes only on manipulation-to-locomotion P", cases, pref_res, 0.0));
    Ok(out)
}

// ---- impedance ----

struct ImpedanceCase {
    j: DMatrix<f64>,
    mass: DMatrix<f64>,
}

fn impedance_case(rng: &mut ChaCha8Rng, model: &RobotModel) -> Result<ImpedanceCase> {
    let base = BaseVirtualParams::default();
    loop {
        let s = random_state(rng, model);
        let j = model.whole_body_jacobian(&s)?;
        let mass = dynamics::whole_body_inertia(model, s.arm().as_slice(), &base)?;
        let w = moca::weight_matrix(&mass, 1.0, 1.0)?;
        if moca::weighted_task_inertias(&j, &mass, &w).is_ok() && manipulability(&model.arm_jacobian(s.arm().as_slice())?) > 1e-3 {
            return Ok(ImpedanceCase { j, mass });
        }
    }
}

fn impedance(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const G: &str = "impedance";
    let mut out = Vec::new();
    let model = RobotModel::moca_like();

    let mut cons_res: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..1000 {
        let c = impedance_case(rng, &model)?;
        let (eb, ea) = (uniform(rng, 0.5, 10.0), uniform(rng, 0.5, 10.0));
        let w = moca::weight_matrix(&c.mass, eb, ea)?;
        let f = random_wrench(rng);
        let tau0 = random_vector(rng, model.dof(), 10.0);
        let tau = moca::whole_body_torque(&c.j, &c.mass, &w, &f, &tau0)?;
        let t = moca::weighted_task_inertias(&c.j, &c.mass, &w)?;
        let got = t.jbar.transpose() * &tau;
        let fv = f.to_vector();
        let err = (Vector6::from_column_slice(got.as_slice()) - fv).norm();
        cons_res = cons_res.max(err / (1.0 + fv.norm()));
        cases += 1;
    }
    out.push(CheckResult::new(G, "dynamic consistency |Jbar^T tau - F| / (1 + |F|)", cases, cons_res, 1e-8));

    // τ_c with τ_0 = 0 minimizes ½ τᵀ W τ subject to J̄ᵀ τ = F
    let mut kkt_res: f64 = 0.0;
    cases = 0;
    for _ in 0..50 {
        let c = impedance_case(rng, &model)?;
        let w = moca::weight_matrix(&c.mass, uniform(rng, 0.5, 10.0), uniform(rng, 0.5, 10.0))?;
        let f = random_wrench(rng);
        let tau = moca::whole_body_torque(&c.j, &c.mass, &w, &f, &DVector::zeros(model.dof()))?;
        let minv = c.mass.clone().try_inverse().ok_or(Error::NotPositiveDefinite("inertia matrix"))?;
        let lambda = (&c.j * &minv * c.j.transpose()).try_inverse().ok_or(Error::Singular { sigma_min: 0.0 })?;
        let jbar_t = (&minv * c.j.transpose() * lambda).transpose();
        let fv = DVector::from_column_slice(f.to_vector().as_slice());
        let Some(qp) = oracle::equality_qp(&w, &jbar_t, &fv) else {
            continue;
        };
        kkt_res = kkt_res.max((&tau - &qp).amax() / qp.amax().max(1.0));
        cases += 1;
    }
    out.push(CheckResult::new(G, "KKT equality-constrained QP equivalence", cases, kkt_res, 1e-6));

    // heavier base penalty → smaller base torque
    let mut mono_res: f64 = 0.0;
    cases = 0;
    for _ in 0..200 {
        let c = impedance_case(rng, &model)?;
        let f = random_wrench(rng);
        let mut prev = f64::INFINITY;
        for eb in [1.0, 5.0, 25.0] {
            let w = moca::weight_matrix(&c.mass, eb, 1.0)?;
            let tau = moca::whole_body_torque(&c.j, &c.mass, &w, &f, &DVector::zeros(model.dof()))?;
            let b = tau.rows(0, BASE_DOF).norm();
            if prev.is_finite() {
                mono_res = mono_res.max(b / prev);
            }
            prev = b;
        }
        cases += 1;
    }
    out.push(CheckResult::new(G, "base torque ratio across eta_B 1, 5, 25", cases, mono_res, 1.0 - 1e-9));

    // closed-loop regulation at rest, gravity on
    let cfg = sim::ScenarioConfig::from_toml_str("name = \"regulation\"\nrobot = \"moca-like\"\nduration = 10.0\n")?;
    let log = sim::run_scenario(&cfg)?;
    let p0 = log.records[0].x.position;
    let drift = log.records.iter().map(|r| (r.x.position - p0).norm()).fold(0.0, f64::max);
    out.push(CheckResult::new(G, "closed-loop end-effector drift over 10 s [m]", log.records.len(), drift, 1e-3));
    Ok(out)
}

// ---- null space ----

fn nullspace(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    const G: &str = "nullspace";
    let mut out = Vec::new();
    let model = RobotModel::moca_like();
    let gains = ImpedanceGains::default();
    let flip = opts.mutation == Some(Mutation::FlipNullspaceTorque);

    let mut ann_res: f64 = 0.0;
    let mut restore_res: f64 = 0.0;
    let mut cases = 0;
    for i in 0..1000 {
        let priority = if i % 2 == 0 { Priority::Manipulation } else { Priority::Locomotion };
        let params = gains.resolve(priority, model.arm_dof());
        let c = impedance_case(rng, &model)?;
        let q = random_vector(rng, model.dof(), 1.0);
        let q_pref = &q + random_vector(rng, model.dof(), 0.3);
        let dq = random_vector(rng, model.dof(), 0.5);
        let mut tau0 = moca::nullspace_torque(&params, &q, &dq, &q_pref)?;
        if flip {
            tau0 = -tau0;
        }
        let w = moca::weight_matrix(&c.mass, params.eta_base, params.eta_arm)?;
        let tau = moca::whole_body_torque(&c.j, &c.mass, &w, &Wrench::zero(), &tau0)?;
        // task acceleration produced by the projected posture torque
        let t = moca::weighted_task_inertias(&c.j, &c.mass, &w)?;
        let leak = t.jbar.transpose() * &tau;
        ann_res = ann_res.max(leak.norm() / tau0.norm().max(1e-12));

        // the posture torque must restore: it does positive work towards q_pref
        // and dissipates joint velocity
        let mut still = moca::nullspace_torque(&params, &q, &DVector::zeros(model.dof()), &q_pref)?;
        let mut at_pref = moca::nullspace_torque(&params, &q_pref, &dq, &q_pref)?;
        if flip {
            still = -still;
            at_pref = -at_pref;
        }
        let toward = still.dot(&(&q_pref - &q)) / (still.norm() * (&q_pref - &q).norm()).max(1e-12);
        let dissipation = at_pref.dot(&dq) / (at_pref.norm() * dq.norm()).max(1e-12);
        restore_res = restore_res.max(-toward).max(dissipation);
        cases += 1;
    }
    out.push(CheckResult::new(G, "posture torque annihilated in task space", cases, ann_res, 1e-8));
    out.push(CheckResult::new(G, "posture torque restoring and dissipative", cases, restore_res, 0.0));

    // secondary velocity never moves the end effector
    let kin = RobotModel::kairos_like();
    let p = ClikGains::default().resolve(Priority::Locomotion);
    let mut proj_res: f64 = 0.0;
    let mut oracle_res: f64 = 0.0;
    cases = 0;
    for _ in 0..1000 {
        let s = random_state(rng, &kin);
        let j = kin.whole_body_jacobian(&s)?;
        let q_pref = &s.q + random_vector(rng, kin.dof(), 0.5);
        let mut v2 = kairos::secondary_velocity(&p, &s.q, &q_pref)?;
        if flip {
            v2 = -v2;
        }
        let projected = kairos::nullspace_project(&j, &v2)?;
        let jn = (&j * &projected).norm();
        proj_res = proj_res.max(jn / (j.norm() * v2.norm()).max(1e-12));
        if let Some(nproj) = oracle::nullspace_projector(&j) {
            oracle_res = oracle_res.max((&projected - nproj * &v2).amax() / v2.amax().max(1e-12));
        }
        cases += 1;
    }
    out.push(CheckResult::new(G, "secondary task invisible at the end effector", cases, proj_res, 1e-8));
    out.push(CheckResult::new(G, "SVD projector vs closed-form projector", cases, oracle_res, 1e-9));
    Ok(out)
}

// ---- inverse kinematics ----

/// `x_d ⊖ x` from rotation matrices, independently of the quaternion route.
fn pose_error_matrix(x: &Pose, x_d: &Pose) -> Vector6<f64> {
    let dp = x_d.position - x.position;
    let r = x_d.orientation.to_rotation_matrix() * x.orientation.to_rotation_matrix().inverse();
    let w = oracle::rotation_log(r.matrix());
    Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z)
}

fn clik(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    const G: &str = "clik";
    let mut out = Vec::new();
    let gains = ClikGains::default();

    let mut ls_res: f64 = 0.0;
    let mut cases = 0;
    for i in 0..1000 {
        let model = &models()[i % 2];
        let p = gains.resolve(if i % 3 == 0 { Priority::Locomotion } else { Priority::Manipulation });
        let s = random_state(rng, model);
        let j = model.whole_body_jacobian(&s)?;
        let k = uniform(rng, 1.0, 1.0 + p.k0);
        let w2 = kairos::regularization_weight(&p, k, model.arm_dof());
        let x = model.forward_kinematics(&s)?;
        let mut x_d = x;
        x_d.position += Vector3::from_fn(|_, _| normal(rng, 0.05));
        x_d.orientation = UnitQuaternion::from_scaled_axis(Vector3::from_fn(|_, _| normal(rng, 0.2))) * x.orientation;
        let dx_d = Twist::new(Vector3::from_fn(|_, _| normal(rng, 0.2)), Vector3::from_fn(|_, _| normal(rng, 0.2)));
        let got = kairos::primary_velocity(&j, &p, &w2, &x, &x_d, &dx_d)?;
        let r = dx_d.to_vector() + p.gain.component_mul(&pose_error_matrix(&x, &x_d));
        let w1 = DVector::from_column_slice(p.tracking_weight.as_slice());
        let want = oracle::stacked_least_squares(&j, &w1, &w2.diagonal(), &DVector::from_column_slice(r.as_slice()));
        ls_res = ls_res.max((&got - &want).norm() / want.norm().max(1e-12));
        cases += 1;
    }
    out.push(CheckResult::new(G, "primary velocity vs stacked least squares (relative)", cases, ls_res, 1e-6));

    let p = gains.resolve(Priority::Manipulation);
    let ends = (kairos::damping_factor(p.w_threshold, &p) - 1.0).abs() + (kairos::damping_factor(0.0, &p) - (1.0 + p.k0)).abs();
    out.push(CheckResult::new(G, "damping schedule end values k(w_t) = 1, k(0) = 1 + k0", 2, ends, 0.0));
    let (jump, increase) = damping_schedule_scan(&p, 10_000);
    out.push(CheckResult::new(G, "damping schedule continuity (max jump)", 10_000, jump, 1e-9));
    out.push(CheckResult::new(G, "damping schedule non-increasing", 10_000, increase, 0.0));
    Ok(out)
}

/// Scans `k(w)` over `[0, 2 w_t]` on `n` points (the threshold included).
/// Returns the largest jump between left and right limits at a grid point and
/// the largest increase between neighbours.
pub fn damping_schedule_scan(p: &ClikParams, n: usize) -> (f64, f64) {
    let k = |w: f64| kairos::damping_factor(w, p);
    let top = 2.0 * p.w_threshold;
    let delta = 1e-12 * p.w_threshold;
    let mut jump: f64 = 0.0;
    let mut increase: f64 = 0.0;
    let mut prev = k(0.0);
    for i in 0..n {
        let w = top * i as f64 / (n - 1) as f64;
        let w = if (i as f64 - (n - 1) as f64 / 2.0).abs() < 0.5 { p.w_threshold } else { w };
        let left = k((w - delta).max(0.0));
        let right = k(w + delta);
        jump = jump.max((right - left).abs());
        let cur = k(w);
        increase = increase.max(cur - prev);
        prev = cur;
    }
    // the threshold itself
    jump = jump.max((k(p.w_threshold - delta) - k(p.w_threshold + delta)).abs());
    (jump, increase)
}

// ---- simulator ----

fn sim_group() -> Result<Vec<CheckResult>> {
    const G: &str = "sim";
    let mut out = Vec::new();

    // determinism on every built-in scenario
    let mut diff = 0.0;
    let names = sim::builtin_names();
    for name in &names {
        let cfg = sim::builtin_scenario(name)?;
        let a = sim::run_scenario(&cfg)?.to_csv_string();
        let b = sim::run_scenario(&cfg)?.to_csv_string();
        if a != b {
            diff = 1.0;
        }
    }
    out.push(CheckResult::new(G, "identical config gives byte-identical CSV", names.len(), diff, 0.0));

    // halving the physics step
    let cfg = sim::builtin_scenario("path_track")?;
    let coarse = cfg.with_overrides(&["dt_physics=2e-4".into()])?;
    let fine = sim::run_scenario(&cfg)?;
    let rough = sim::run_scenario(&coarse)?;
    let end = |l: &sim::SimLog| l.records.last().map(|r| r.x.position).unwrap_or_default();
    out.push(CheckResult::new(G, "path_track final position under dt halving [m]", 2, (end(&fine) - end(&rough)).norm(), 1e-4));

    // after a latch nothing is commanded and the joints come to rest
    let mut cmd_res: f64 = 0.0;
    let mut rest_res: f64 = 0.0;
    let mut cases = 0;
    for robot in ["moca-like", "kairos-like"] {
        let cfg = sim::builtin_scenario("wall_insertion")?.with_overrides(&[
            format!("robot=\"{robot}\""),
            "profile.0.force=[30.0, 0.0, 0.0]".into(),
        ])?;
        let log = sim::run_scenario(&cfg)?;
        let Some(first) = log.records.iter().position(|r| r.safety_stop) else {
            cmd_res = f64::INFINITY;
            continue;
        };
        let t0 = log.records[first].t;
        for r in &log.records[first..] {
            cmd_res = cmd_res.max(if r.safety_stop { r.command.amax() } else { f64::INFINITY });
            if r.t >= t0 + 0.5 {
                rest_res = rest_res.max(r.dq.norm());
            }
        }
        cases += 1;
    }
    out.push(CheckResult::new(G, "no command after the safety latch", cases, cmd_res, 0.0));
    out.push(CheckResult::new(G, "joint speed 0.5 s after the safety latch", cases, rest_res, 1e-6));

    // reported f_ext is what the plant received
    let mut contact_res: f64 = 0.0;
    cases = 0;
    for robot in ["moca-like", "kairos-like"] {
        let cfg = sim::builtin_scenario("wall_insertion")?.with_overrides(&[format!("robot=\"{robot}\"")])?;
        let mut w = world::World::new(&cfg)?;
        let ticks = (cfg.duration / w.tick_period()).round() as usize;
        for _ in 0..ticks {
            let rec = w.tick()?;
            if let Some(applied) = w.injected_wrench() {
                contact_res = contact_res.max((rec.f_ext.to_vector() - applied.to_vector()).amax());
                cases += 1;
            }
        }
    }
    out.push(CheckResult::new(G, "recorded f_ext equals the wrench injected that tick", cases, contact_res, 0.0));
    Ok(out)
}
