use std::f64::consts::PI;

use approx::assert_relative_eq;
use locoman_core::dynamics::{self, BaseVirtualParams, STANDARD_GRAVITY};
use locoman_core::interface::{AdmittanceParams, Button, InterfaceState, Priority};
use locoman_core::kairos::{self, ClikGains};
use locoman_core::model::{manipulability, JointState, RobotModel};
use locoman_core::moca::{self, ImpedanceGains};
use locoman_core::oracle;
use locoman_core::sim::{contact_wrench, ScenarioConfig, Wall};
use locoman_core::spatial::{Pose, Twist, Wrench};
use nalgebra::{DVector, Vector3, Vector6};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn arm(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(angle(), n)
}

fn base() -> impl Strategy<Value = [f64; 3]> {
    (-3.0..3.0, -3.0..3.0, angle()).prop_map(|(x, y, t)| [x, y, t])
}

fn vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn wrench() -> impl Strategy<Value = Wrench> {
    (vec3(100.0), vec3(10.0)).prop_map(|(f, t)| Wrench::new(f, t))
}

fn button() -> impl Strategy<Value = Button> {
    prop_oneof![Just(Button::A), Just(Button::M), Just(Button::G), Just(Button::P)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jacobian_matches_finite_differences(b in base(), qa in arm(7)) {
        let m = RobotModel::moca_like();
        let s = JointState::from_parts(b, &qa);
        let j = m.whole_body_jacobian(&s).unwrap();
        let fd = oracle::fd_jacobian(&m, s.q.as_slice(), 1e-6);
        prop_assert!((j - fd).amax() < 1e-6);
    }

    #[test]
    fn kairos_fk_matches_homogeneous_products(b in base(), qa in arm(6)) {
        let m = RobotModel::kairos_like();
        let s = JointState::from_parts(b, &qa);
        let pose = m.forward_kinematics(&s).unwrap();
        let t = oracle::forward_kinematics(&m, s.q.as_slice());
        prop_assert!((pose.position - Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])).amax() < 1e-12);
        prop_assert!((pose.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn manipulability_ignores_the_base(b1 in base(), b2 in base(), qa in arm(6)) {
        let m = RobotModel::kairos_like();
        let s1 = JointState::from_parts(b1, &qa);
        let s2 = JointState::from_parts(b2, &qa);
        let w1 = manipulability(&m.arm_jacobian(s1.arm().as_slice()).unwrap());
        let w2 = manipulability(&m.arm_jacobian(s2.arm().as_slice()).unwrap());
        prop_assert_eq!(w1.to_bits(), w2.to_bits());
    }

    #[test]
    fn coriolis_skew_and_gravity_gradient(qa in arm(7), dq in prop::collection::vec(-2.0..2.0f64, 7)) {
        let m = RobotModel::moca_like();
        let d = dynamics::arm_dynamics(&m, &qa, &dq, STANDARD_GRAVITY).unwrap();
        let n = oracle::fd_mass_rate(&m, &qa, &dq, 1e-5) - &d.coriolis * 2.0;
        prop_assert!((&n + n.transpose()).amax() < 1e-8);
        prop_assert!((&d.gravity - oracle::fd_gravity(&m, &qa, STANDARD_GRAVITY, 1e-6)).amax() < 1e-6);
        prop_assert!((&d.mass - oracle::mass_matrix(&m, &qa)).amax() < 1e-10);
    }

    #[test]
    fn inactive_admittance_keeps_target(ws in prop::collection::vec(wrench(), 1..40)) {
        let q = JointState::from_parts([0.0; 3], &[0.2; 7]);
        let mut s = InterfaceState::new(Pose::identity(), &q);
        s.admittance_active = false;
        let before = s.x_d;
        for w in &ws {
            s = s.admittance_step(&AdmittanceParams::default(), w, 1e-3).unwrap();
        }
        prop_assert_eq!(s.x_d, before);
    }

    #[test]
    fn preferred_posture_set_only_on_switch_to_locomotion(presses in prop::collection::vec((button(), arm(7)), 1..30)) {
        let q = JointState::from_parts([0.0; 3], &[0.0; 7]);
        let mut s = InterfaceState::new(Pose::identity(), &q);
        for (b, qa) in presses {
            let cur = JointState::from_parts([0.0; 3], &qa);
            let prev = s.clone();
            s = s.handle_button(b, &cur, &Pose::identity());
            if b == Button::P && prev.priority == Priority::Manipulation {
                prop_assert_eq!(&s.q_pref, &cur.q);
            } else {
                prop_assert_eq!(&s.q_pref, &prev.q_pref);
            }
        }
    }

    #[test]
    fn impedance_torque_is_dynamically_consistent(b in base(), qa in arm(7), f in wrench(), eb in 0.5..25.0f64, ea in 0.5..10.0f64) {
        let m = RobotModel::moca_like();
        let s = JointState::from_parts(b, &qa);
        prop_assume!(manipulability(&m.arm_jacobian(&qa).unwrap()) > 1e-3);
        let j = m.whole_body_jacobian(&s).unwrap();
        let mass = dynamics::whole_body_inertia(&m, &qa, &BaseVirtualParams::default()).unwrap();
        let w = moca::weight_matrix(&mass, eb, ea).unwrap();
        let tau0 = DVector::from_fn(10, |i, _| (i as f64 - 4.5) * 3.0);
        let Ok(t) = moca::weighted_task_inertias(&j, &mass, &w) else { return Ok(()); };
        let tau = moca::whole_body_torque(&j, &mass, &w, &f, &tau0).unwrap();
        let got = Vector6::from_column_slice((t.jbar.transpose() * &tau).as_slice());
        prop_assert!((got - f.to_vector()).norm() <= 1e-8 * (1.0 + f.norm()));
    }

    #[test]
    fn posture_torque_pulls_towards_preference(q in prop::collection::vec(-2.0..2.0f64, 10), dq in prop::collection::vec(-1.0..1.0f64, 10)) {
        let p = ImpedanceGains::default().resolve(Priority::Locomotion, 7);
        let q = DVector::from_vec(q);
        let zero = DVector::zeros(10);
        let tau = moca::nullspace_torque(&p, &q, &zero, &zero).unwrap();
        prop_assert!(tau.dot(&q) <= 0.0);
        let dq = DVector::from_vec(dq);
        let tau = moca::nullspace_torque(&p, &zero, &dq, &zero).unwrap();
        prop_assert!(tau.dot(&dq) <= 0.0);
    }

    #[test]
    fn clik_matches_stacked_least_squares(b in base(), qa in arm(6), dp in vec3(0.1), dx in vec3(0.3), k in 1.0..3.0f64) {
        let m = RobotModel::kairos_like();
        let s = JointState::from_parts(b, &qa);
        let p = ClikGains::default().resolve(Priority::Manipulation);
        let j = m.whole_body_jacobian(&s).unwrap();
        let w2 = kairos::regularization_weight(&p, k, 6);
        let x = m.forward_kinematics(&s).unwrap();
        let x_d = Pose::new(x.position + dp, x.orientation);
        let dx_d = Twist::new(dx, Vector3::zeros());
        let got = kairos::primary_velocity(&j, &p, &w2, &x, &x_d, &dx_d).unwrap();
        let mut r = dx_d.to_vector();
        for i in 0..3 {
            r[i] += p.gain[i] * dp[i];
        }
        let want = oracle::stacked_least_squares(&j, &DVector::from_column_slice(p.tracking_weight.as_slice()), &w2.diagonal(), &DVector::from_column_slice(r.as_slice()));
        prop_assert!((&got - &want).norm() <= 1e-6 * want.norm().max(1e-12));
    }

    #[test]
    fn secondary_motion_stays_in_null_space(b in base(), qa in arm(6), pref in arm(6)) {
        let m = RobotModel::kairos_like();
        let s = JointState::from_parts(b, &qa);
        let p = ClikGains::default().resolve(Priority::Locomotion);
        let j = m.whole_body_jacobian(&s).unwrap();
        let q_pref = JointState::from_parts(b, &pref).q;
        let v2 = kairos::secondary_velocity(&p, &s.q, &q_pref).unwrap();
        let projected = kairos::nullspace_project(&j, &v2).unwrap();
        prop_assert!((&j * projected).norm() <= 1e-8 * j.norm() * v2.norm().max(1e-300));
    }

    #[test]
    fn damping_factor_is_monotone(a in 0.0..0.01f64, b in 0.0..0.01f64) {
        let p = ClikGains::default().resolve(Priority::Manipulation);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(kairos::damping_factor(hi, &p) <= kairos::damping_factor(lo, &p));
        prop_assert!(kairos::damping_factor(lo, &p) <= 1.0 + p.k0);
    }

    #[test]
    fn walls_push_and_never_pull(x in -0.05..0.05f64, v in vec3(1.0), k in 0.0..1e5f64, c in 0.0..500.0f64) {
        let wall = Wall { point: Vector3::zeros(), normal: Vector3::new(-1.0, 0.0, 0.0), stiffness: k, damping: c };
        let ee = Pose::new(Vector3::new(x, 0.0, 0.0), Default::default());
        let cs = contact_wrench(&[wall], &ee, &Twist::new(v, Vector3::zeros()));
        prop_assert!(cs.wrench.linear.x <= 0.0);
        prop_assert_eq!(cs.wrench.angular, Vector3::zeros());
        if x <= 0.0 {
            prop_assert_eq!(cs.wrench, Wrench::zero());
        }
    }
}

#[test]
fn scenario_validation_reports_field_paths() {
    let bad = "name = \"x\"\nrobot = \"moca-like\"\nduration = 1.0\ndt_physics = 0.01\n";
    let err = ScenarioConfig::from_toml_str(bad).unwrap().validate().unwrap_err().to_string();
    assert!(err.contains("dt_physics"), "{err}");
    let bad = "name = \"x\"\nrobot = \"moca-like\"\nduration = 1.0\n[[walls]]\npoint = [0.0, 0.0, 0.0]\nnormal = [2.0, 0.0, 0.0]\nstiffness = 1.0\ndamping = 0.0\n";
    let err = ScenarioConfig::from_toml_str(bad).unwrap().validate().unwrap_err().to_string();
    assert!(err.contains("walls[0].normal") || err.contains("walls.0.normal"), "{err}");
}

#[test]
fn admittance_matches_first_order_response() {
    let p = AdmittanceParams::default();
    let q = JointState::from_parts([0.0; 3], &[0.0; 7]);
    let mut s = InterfaceState::new(Pose::identity(), &q);
    let f = Wrench::new(Vector3::new(20.0, 0.0, 0.0), Vector3::zeros());
    let dt = 1e-4;
    for _ in 0..5000 {
        s = s.admittance_step(&p, &f, dt).unwrap();
    }
    assert_relative_eq!(s.dx_d.linear.x, oracle::first_order_step(6.0, 20.0, 20.0, 0.5), max_relative = 1e-3);
}
