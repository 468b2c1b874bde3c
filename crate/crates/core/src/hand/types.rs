//! Hand pose parameterization: global extrinsics plus 16 joint angles.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::HandError;

/// Number of intrinsic joint angles (5 fingers x 3 flexion + 1 thumb
/// opposition).
pub const JOINT_COUNT: usize = 16;

/// Intrinsic joint angles in radians. Values beyond the joint limits are
/// legal; limit violations are penalized, not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandIntrinsics {
    pub theta: [f64; JOINT_COUNT],
}

impl HandIntrinsics {
    pub fn zeros() -> Self {
        Self {
            theta: [0.0; JOINT_COUNT],
        }
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self, HandError> {
        if theta.len() != JOINT_COUNT {
            return Err(HandError::InvalidInput(format!(
                "expected {JOINT_COUNT} joint angles, got {}",
                theta.len()
            )));
        }
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(HandError::InvalidInput("non-finite joint angle".into()));
        }
        let mut out = [0.0; JOINT_COUNT];
        out.copy_from_slice(theta);
        Ok(Self { theta: out })
    }

    /// Euclidean distance in joint space.
    pub fn distance(&self, other: &HandIntrinsics) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Global hand transform. The rotation is stored as an orthonormal matrix
/// (validated on construction) so poses round-trip through JSON losslessly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandExtrinsics {
    pub translation: Vector3<f64>,
    rotation: Rotation3<f64>,
}

impl HandExtrinsics {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Rotation3::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: Matrix3<f64>) -> Result<Self, HandError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det = rotation.determinant();
        if ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(HandError::InvalidInput(format!(
                "rotation not orthonormal (|R^T R - I| = {ortho:.2e}, det = {det})"
            )));
        }
        Ok(Self {
            translation,
            rotation: Rotation3::from_matrix_unchecked(rotation),
        })
    }

    pub fn from_rotation(translation: Vector3<f64>, rotation: Rotation3<f64>) -> Self {
        Self {
            translation,
            rotation,
        }
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.matrix()
    }

    /// Applies a left-multiplied axis-angle increment to the rotation.
    pub fn rotate_by(&mut self, axis_angle: &Vector3<f64>) {
        let delta = Rotation3::from_scaled_axis(*axis_angle);
        self.rotation = delta * self.rotation;
    }
}

/// Full pose `(T, R, theta)` of the articulated hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub extrinsics: HandExtrinsics,
    pub intrinsics: HandIntrinsics,
}

impl HandPose {
    pub fn rest() -> Self {
        Self {
            extrinsics: HandExtrinsics::identity(),
            intrinsics: HandIntrinsics::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.extrinsics.translation.iter().all(|x| x.is_finite())
            && self
                .extrinsics
                .rotation
                .matrix()
                .iter()
                .all(|x| x.is_finite())
            && self.intrinsics.theta.iter().all(|x| x.is_finite())
    }
}

/// Per-joint angle ranges in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub lower: [f64; JOINT_COUNT],
    pub upper: [f64; JOINT_COUNT],
}

impl JointLimits {
    pub fn new(lower: [f64; JOINT_COUNT], upper: [f64; JOINT_COUNT]) -> Result<Self, HandError> {
        for j in 0..JOINT_COUNT {
            if lower[j] > upper[j] {
                return Err(HandError::InvalidInput(format!(
                    "joint {j}: lower {} > upper {}",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn midpoint(&self) -> HandIntrinsics {
        let mut theta = [0.0; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            theta[j] = 0.5 * (self.lower[j] + self.upper[j]);
        }
        HandIntrinsics { theta }
    }
}

/// Per-joint excess beyond the limit box: `max(0, lo - t) + max(0, t - hi)`.
pub fn joint_limit_excess(theta: &HandIntrinsics, limits: &JointLimits) -> [f64; JOINT_COUNT] {
    let mut out = [0.0; JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        out[j] = (limits.lower[j] - theta.theta[j]).max(0.0)
            + (theta.theta[j] - limits.upper[j]).max(0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_limits() -> JointLimits {
        crate::hand::HandModel::builtin().limits.clone()
    }

    #[test]
    fn midpoint_has_zero_excess() {
        let limits = default_limits();
        let mid = limits.midpoint();
        assert_eq!(joint_limit_excess(&mid, &limits), [0.0; JOINT_COUNT]);
    }

    #[test]
    fn single_violation_reports_only_that_joint() {
        let limits = default_limits();
        let mut theta = limits.midpoint();
        theta.theta[4] = limits.upper[4] + 0.2;
        let ex = joint_limit_excess(&theta, &limits);
        for (j, e) in ex.iter().enumerate() {
            if j == 4 {
                assert!((e - 0.2).abs() < 1e-15);
            } else {
                assert_eq!(*e, 0.0);
            }
        }
    }

    #[test]
    fn excess_matches_elementwise_reference() {
        let limits = default_limits();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut theta = [0.0; JOINT_COUNT];
            for t in &mut theta {
                *t = rng.gen::<f64>() * 4.0 - 2.0;
            }
            let intr = HandIntrinsics { theta };
            let got = joint_limit_excess(&intr, &limits);
            for j in 0..JOINT_COUNT {
                let t = theta[j];
                let expect = if t < limits.lower[j] {
                    limits.lower[j] - t
                } else if t > limits.upper[j] {
                    t - limits.upper[j]
                } else {
                    0.0
                };
                assert_eq!(got[j], expect);
            }
        }
    }

    #[test]
    fn boundary_is_zero_excess() {
        let limits = default_limits();
        let mut theta = [0.0; JOINT_COUNT];
        theta.copy_from_slice(&limits.upper);
        let intr = HandIntrinsics { theta };
        assert_eq!(joint_limit_excess(&intr, &limits), [0.0; JOINT_COUNT]);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(HandExtrinsics::new(Vector3::zeros(), m).is_err());
    }
}
