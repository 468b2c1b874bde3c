//! Hand contact maps: per-vertex proximity to the object surface,
//! mapped into (0, 1] with `exp(-d / tau)`.

use serde::{Deserialize, Serialize};

use crate::geom::NnIndex;
use crate::hand::HandMesh;

/// Contact-map length scale in meters; exposed in config.
pub const DEFAULT_TAU: f64 = 0.01;

/// Per-hand-vertex contact value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMap {
    pub values: Vec<f64>,
}

/// Per-vertex Gaussian statistics of the contact maps of a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMapDistribution {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ContactMapDistribution {
    /// Mean/population-std over a set of equally long contact maps.
    pub fn from_maps(maps: &[ContactMap]) -> Self {
        assert!(!maps.is_empty());
        let n = maps[0].values.len();
        let count = maps.len() as f64;
        let mut mu = vec![0.0; n];
        for m in maps {
            for (acc, v) in mu.iter_mut().zip(&m.values) {
                *acc += v;
            }
        }
        for v in &mut mu {
            *v /= count;
        }
        let mut sigma = vec![0.0; n];
        for m in maps {
            for (acc, (v, mean)) in sigma.iter_mut().zip(m.values.iter().zip(&mu)) {
                *acc += (v - mean) * (v - mean);
            }
        }
        for v in &mut sigma {
            *v = (*v / count).sqrt();
        }
        Self { mu, sigma }
    }
}

/// Contact map of a posed hand against an object surface index:
/// `exp(-d_j / tau)` where `d_j` is the nearest distance of vertex `j`.
pub fn contact_map(hand: &HandMesh, object_index: &NnIndex, tau: f64) -> ContactMap {
    let values = crate::exec::map_indexed(hand.vertices.len(), |j| {
        let (d, _) = object_index
            .nearest(&hand.vertices[j])
            .expect("contact_map requires a nonempty index");
        (-d / tau).exp()
    });
    ContactMap { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{forward_kinematics, HandModel, HandPose};
    use nalgebra::{Point3, Rotation3, Vector3};

    #[test]
    fn touching_vertex_maps_to_one() {
        let model = HandModel::builtin();
        let fk = forward_kinematics(&model, &HandPose::rest());
        // index the hand's own vertices: every distance is zero
        let idx = NnIndex::build(&fk.mesh.vertices);
        let cm = contact_map(&fk.mesh, &idx, DEFAULT_TAU);
        assert!(cm.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn distance_tau_maps_to_inv_e() {
        let model = HandModel::builtin();
        let fk = forward_kinematics(&model, &HandPose::rest());
        // a single target point exactly tau away from vertex 0
        let p = fk.mesh.vertices[0] + Vector3::new(DEFAULT_TAU, 0.0, 0.0);
        let idx = NnIndex::build(&[p]);
        let cm = contact_map(&fk.mesh, &idx, DEFAULT_TAU);
        assert!((cm.values[0] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn ordering_is_monotone_in_distance() {
        let model = HandModel::builtin();
        let fk = forward_kinematics(&model, &HandPose::rest());
        let idx = NnIndex::build(&[Point3::new(0.3, 0.1, -0.2)]);
        let cm = contact_map(&fk.mesh, &idx, DEFAULT_TAU);
        for a in 0..fk.mesh.len() {
            for b in (a + 1)..fk.mesh.len().min(a + 17) {
                let da = (fk.mesh.vertices[a] - Point3::new(0.3, 0.1, -0.2)).norm();
                let db = (fk.mesh.vertices[b] - Point3::new(0.3, 0.1, -0.2)).norm();
                if da < db {
                    assert!(cm.values[a] > cm.values[b]);
                }
            }
        }
    }

    #[test]
    fn invariant_under_joint_rigid_transform() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        pose.intrinsics.theta[4] = 0.8;
        let fk = forward_kinematics(&model, &pose);
        let obj_pts = vec![
            Point3::new(0.05, 0.1, -0.03),
            Point3::new(-0.02, 0.12, 0.01),
            Point3::new(0.0, 0.2, 0.0),
        ];
        let cm0 = contact_map(&fk.mesh, &NnIndex::build(&obj_pts), DEFAULT_TAU);

        let rot = Rotation3::from_euler_angles(0.4, -0.8, 1.2);
        let t = Vector3::new(0.3, -0.1, 0.25);
        let mut posed = pose.clone();
        posed.extrinsics = crate::hand::HandExtrinsics::from_rotation(
            rot * pose.extrinsics.translation + t,
            rot * pose.extrinsics.rotation(),
        );
        let fk2 = forward_kinematics(&model, &posed);
        let moved: Vec<Point3<f64>> = obj_pts.iter().map(|p| rot * p + t).collect();
        let cm1 = contact_map(&fk2.mesh, &NnIndex::build(&moved), DEFAULT_TAU);
        for (a, b) in cm0.values.iter().zip(&cm1.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn distribution_matches_two_pass_reference() {
        let maps = vec![
            ContactMap {
                values: vec![0.2, 0.9, 0.5],
            },
            ContactMap {
                values: vec![0.4, 0.7, 0.5],
            },
            ContactMap {
                values: vec![0.9, 0.8, 0.5],
            },
        ];
        let d = ContactMapDistribution::from_maps(&maps);
        for j in 0..3 {
            let vals: Vec<f64> = maps.iter().map(|m| m.values[j]).collect();
            let mean = vals.iter().sum::<f64>() / 3.0;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            assert!((d.mu[j] - mean).abs() < 1e-15);
            assert!((d.sigma[j] - var.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn singleton_distribution_has_zero_sigma() {
        let maps = vec![ContactMap {
            values: vec![0.3, 0.6],
        }];
        let d = ContactMapDistribution::from_maps(&maps);
        assert_eq!(d.mu, vec![0.3, 0.6]);
        assert_eq!(d.sigma, vec![0.0, 0.0]);
    }
}
