//! Dissimilarity between grasping instances: infinite across affordance
//! types, otherwise the contact-part OBB distance plus the intrinsics
//! distance. Optional per-term weights default to 1 (the two terms add
//! raw, meters plus radians).

use crate::dataset::{AffordanceType, Dataset, GraspInstance};
use crate::geom::{compute_obb, ObbSize};
use crate::hand::HandIntrinsics;

use super::PriorError;

/// The retrieval-facing feature triple of an instance.
#[derive(Debug, Clone)]
pub struct GraspFeature {
    pub instance_id: usize,
    pub affordance: AffordanceType,
    pub obb: ObbSize,
    pub intrinsics: HandIntrinsics,
}

impl GraspFeature {
    /// Feature of an instance; the OBB is computed on the sampled contact
    /// part point cloud (not the mesh vertices).
    pub fn of(instance: &GraspInstance, dataset: &Dataset) -> Result<Self, PriorError> {
        let part = dataset.instance_part_cloud(instance)?;
        let obb = compute_obb(&part)?;
        Ok(Self {
            instance_id: instance.id,
            affordance: instance.affordance,
            obb,
            intrinsics: instance.pose.intrinsics.clone(),
        })
    }

    /// 19-dim clustering feature: sorted OBB extents then joint angles.
    pub fn vector(&self) -> [f64; 19] {
        let mut v = [0.0; 19];
        v[..3].copy_from_slice(&self.obb.extents);
        v[3..].copy_from_slice(&self.intrinsics.theta);
        v
    }
}

/// `D_A + D_P + D_Theta`; `f64::INFINITY` when the affordances differ.
/// The infinity is a return value only — clustering keeps types separate
/// structurally and never feeds it into arithmetic.
pub fn dissimilarity(a: &GraspFeature, b: &GraspFeature) -> f64 {
    dissimilarity_weighted(a, b, 1.0, 1.0)
}

pub fn dissimilarity_weighted(a: &GraspFeature, b: &GraspFeature, w_p: f64, w_theta: f64) -> f64 {
    if a.affordance != b.affordance {
        return f64::INFINITY;
    }
    w_p * a.obb.distance(&b.obb) + w_theta * a.intrinsics.distance(&b.intrinsics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feature(aff: AffordanceType, obb: [f64; 3], theta: [f64; 16]) -> GraspFeature {
        GraspFeature {
            instance_id: 0,
            affordance: aff,
            obb: ObbSize::new(obb),
            intrinsics: HandIntrinsics { theta },
        }
    }

    #[test]
    fn identical_features_have_zero_dissimilarity() {
        let a = feature(AffordanceType::Twist, [0.1, 0.2, 0.3], [0.5; 16]);
        assert_eq!(dissimilarity(&a, &a), 0.0);
    }

    #[test]
    fn different_affordances_are_infinitely_far() {
        let a = feature(AffordanceType::Twist, [0.1, 0.2, 0.3], [0.5; 16]);
        let b = feature(AffordanceType::HandleGrip, [0.1, 0.2, 0.3], [0.5; 16]);
        assert!(dissimilarity(&a, &b).is_infinite());
    }

    #[test]
    fn worked_example_equals_point_four() {
        // OBBs [0.5,1,2] vs [0.5,1,2.1], one joint differing by 0.3
        let mut t1 = [0.0; 16];
        let t2 = t1;
        t1[4] = 0.3;
        let a = feature(AffordanceType::WrapAroundGrip, [0.5, 1.0, 2.0], t1);
        let b = feature(AffordanceType::WrapAroundGrip, [0.5, 1.0, 2.1], t2);
        let d = dissimilarity(&a, &b);
        assert!((d - 0.4).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn symmetric() {
        let a = feature(AffordanceType::Twist, [0.1, 0.25, 0.3], [0.2; 16]);
        let mut th = [0.2; 16];
        th[7] = -0.4;
        let b = feature(AffordanceType::Twist, [0.12, 0.2, 0.33], th);
        assert_eq!(dissimilarity(&a, &b), dissimilarity(&b, &a));
    }
}
