//! Penalty-based contact between the end-effector point and planar walls.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::spatial::{Pose, Twist, Wrench};

/// A half-space boundary: free space lies on the side `normal` points to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub stiffness: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    /// Penetration depth per wall [m].
    pub depth: Vec<f64>,
    pub wrench: Wrench,
}

impl Wall {
    /// Penetration `max(0, −(p − p₀)·n̂)`.
    pub fn penetration(&self, p: &Vector3<f64>) -> f64 {
        (-(p - self.point).dot(&self.normal)).max(0.0)
    }

    /// Spring-damper normal force `k d + c ḋ`, clamped so the wall never pulls.
    pub fn normal_force(&self, p: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
        let d = self.penetration(p);
        if d <= 0.0 {
            return 0.0;
        }
        let rate = -v.dot(&self.normal);
        (self.stiffness * d + self.damping * rate).max(0.0)
    }
}

/// Sum of the wall reactions at the end-effector point; torques are zero.
pub fn contact_wrench(walls: &[Wall], ee: &Pose, twist: &Twist) -> ContactState {
    let mut force = Vector3::zeros();
    let mut depth = Vec::with_capacity(walls.len());
    for w in walls {
        depth.push(w.penetration(&ee.position));
        force += w.normal * w.normal_force(&ee.position, &twist.linear);
    }
    ContactState {
        depth,
        wrench: Wrench::new(force, Vector3::zeros()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    fn wall(k: f64, c: f64) -> Wall {
        Wall {
            point: Vector3::new(1.0, 0.0, 0.0),
            normal: Vector3::new(-1.0, 0.0, 0.0),
            stiffness: k,
            damping: c,
        }
    }

    fn at(x: f64) -> Pose {
        Pose::new(Vector3::new(x, 0.3, 0.2), UnitQuaternion::identity())
    }

    #[test]
    fn free_space_has_no_force() {
        let c = contact_wrench(&[wall(1e4, 10.0)], &at(0.9), &Twist::zero());
        assert_eq!(c.wrench, Wrench::zero());
        assert_eq!(c.depth, vec![0.0]);
    }

    #[test]
    fn static_penetration_is_a_spring() {
        let c = contact_wrench(&[wall(1e4, 10.0)], &at(1.001), &Twist::zero());
        assert_relative_eq!(c.wrench.linear.x, -10.0, epsilon = 1e-9);
        assert_eq!(c.wrench.angular, Vector3::zeros());
    }

    #[test]
    fn withdrawal_never_pulls() {
        let w = wall(1e4, 1e6);
        let out = Twist::new(Vector3::new(-1.0, 0.0, 0.0), Vector3::zeros());
        let c = contact_wrench(&[w], &at(1.0005), &out);
        assert!(c.wrench.linear.x <= 0.0);
        assert_eq!(c.wrench.linear.x, 0.0);
        // moving inwards adds damping against the motion
        let inward = Twist::new(Vector3::new(0.01, 0.0, 0.0), Vector3::zeros());
        let c = contact_wrench(&[wall(1e4, 100.0)], &at(1.001), &inward);
        assert_relative_eq!(c.wrench.linear.x, -11.0, epsilon = 1e-9);
    }
}
