//! Task-space quantities: end-effector pose, twist and wrench.
//!
//! Six-vectors are always ordered `[linear; angular]`.

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// `[px, py, pz, qw, qx, qy, qz]`
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    /// Pose error `target ⊖ self`: position difference and the axis-angle vector of
    /// the rotation taking `self` onto `target`, both in the world frame.
    pub fn error_to(&self, target: &Pose) -> Vector6<f64> {
        let dp = target.position - self.position;
        let dr = orientation_error(&self.orientation, &target.orientation);
        Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
    }

    /// Advances the pose by a world-frame twist held constant over `dt`.
    pub fn integrate(&self, twist: &Twist, dt: f64) -> Pose {
        let rot = UnitQuaternion::from_scaled_axis(twist.angular * dt);
        Pose::new(
            self.position + twist.linear * dt,
            rot * self.orientation,
        )
    }
}

/// Flips the quaternion so that its scalar part is non-negative and renormalizes.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = q.into_inner();
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::new_normalize(q)
}

/// Axis-angle vector of `desired · current⁻¹`, taking the short way round.
pub fn orientation_error(
    current: &UnitQuaternion<f64>,
    desired: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    if current == desired {
        return Vector3::zeros();
    }
    let rel: Quaternion<f64> = (desired * current.inverse()).into_inner();
    let rel = if rel.w < 0.0 { -rel } else { rel };
    let v = rel.imag();
    let s = v.norm();
    if s < 1e-12 {
        // small-angle limit of 2·atan2(s, w)/s
        return v * 2.0 / rel.w.max(1e-300);
    }
    v * (2.0 * s.atan2(rel.w) / s)
}

macro_rules! six_vector {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        pub struct $name {
            pub linear: Vector3<f64>,
            pub angular: Vector3<f64>,
        }

        impl $name {
            pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
                Self { linear, angular }
            }

            pub fn zero() -> Self {
                Self::default()
            }

            pub fn from_vector(v: &Vector6<f64>) -> Self {
                Self {
                    linear: Vector3::new(v[0], v[1], v[2]),
                    angular: Vector3::new(v[3], v[4], v[5]),
                }
            }

            pub fn to_vector(&self) -> Vector6<f64> {
                Vector6::new(
                    self.linear.x,
                    self.linear.y,
                    self.linear.z,
                    self.angular.x,
                    self.angular.y,
                    self.angular.z,
                )
            }

            pub fn to_array(&self) -> [f64; 6] {
                let v = self.to_vector();
                [v[0], v[1], v[2], v[3], v[4], v[5]]
            }

            pub fn is_finite(&self) -> bool {
                self.linear.iter().chain(self.angular.iter()).all(|x| x.is_finite())
            }

            pub fn norm(&self) -> f64 {
                self.to_vector().norm()
            }
        }

        impl std::ops::Add for $name {
            type Output = Self;
            fn add(self, rhs: Self) -> Self {
                Self::new(self.linear + rhs.linear, self.angular + rhs.angular)
            }
        }
    };
}

six_vector!(Twist);
six_vector!(Wrench);

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orientation_error_matches_axis_angle() {
        let current = UnitQuaternion::from_euler_angles(0.2, -0.1, 0.4);
        let rel = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, 0.1));
        let desired = rel * current;
        let err = orientation_error(&current, &desired);
        assert_relative_eq!(err, Vector3::new(0.0, 0.0, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn orientation_error_takes_short_path() {
        let current = UnitQuaternion::identity();
        let desired = UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 3.0, 0.0));
        // negated quaternion encodes the same rotation
        let desired = UnitQuaternion::new_unchecked(-desired.into_inner());
        let err = orientation_error(&current, &desired);
        assert_relative_eq!(err, Vector3::new(0.0, 3.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::new_unchecked(-UnitQuaternion::from_euler_angles(0.3, 0.0, 0.0).into_inner());
        assert!(canonical(q).w >= 0.0);
        assert!(Pose::new(Vector3::zeros(), q).orientation.w >= 0.0);
    }
}
