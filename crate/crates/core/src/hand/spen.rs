//! Self-penetration proxy: bounding spheres per link, summed pairwise
//! overlap between non-adjacent links. Smooth enough to descend on, zero at
//! the rest pose by construction.

use nalgebra::{Point3, Vector3};

use super::fk::HandMesh;
use super::model::HandModel;

/// Per-link sphere centers as the mean of that link's posed vertices.
/// Being linear in the vertices keeps the term differentiable through the
/// same FK jacobian the other losses use.
pub fn link_sphere_centers(mesh: &HandMesh, model: &HandModel) -> Vec<Point3<f64>> {
    let mut centers = Vec::with_capacity(model.link_vertices.len());
    for link in 0..model.link_vertices.len() {
        let (start, end) = model.link_range(link);
        let mut sum = Vector3::zeros();
        for v in &mesh.vertices[start..end] {
            sum += v.coords;
        }
        centers.push(Point3::from(sum / (end - start) as f64));
    }
    centers
}

/// Sum of `max(0, r_i + r_j - |c_i - c_j|)` over non-adjacent link pairs,
/// with all radii scaled by `radius_scale`.
pub fn self_penetration_scaled(mesh: &HandMesh, model: &HandModel, radius_scale: f64) -> f64 {
    let centers = link_sphere_centers(mesh, model);
    let n = centers.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            if model.links_adjacent(i, j) {
                continue;
            }
            let reach = radius_scale * (model.link_sphere_radii[i] + model.link_sphere_radii[j]);
            let d = (centers[i] - centers[j]).norm();
            total += (reach - d).max(0.0);
        }
    }
    total
}

pub fn self_penetration(mesh: &HandMesh, model: &HandModel) -> f64 {
    self_penetration_scaled(mesh, model, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{forward_kinematics, HandPose};

    #[test]
    fn rest_pose_is_penetration_free() {
        let model = HandModel::builtin();
        let fk = forward_kinematics(&model, &HandPose::rest());
        assert_eq!(self_penetration(&fk.mesh, &model), 0.0);
    }

    #[test]
    fn crossed_fingers_penetrate() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        // fold index and middle fully so their distal links sweep through
        // each other's volume
        for j in 3..6 {
            pose.intrinsics.theta[j] = 1.6;
        }
        for j in 6..9 {
            pose.intrinsics.theta[j] = 1.6;
        }
        // also drive ring across: the folded links end up clustered
        for j in 9..12 {
            pose.intrinsics.theta[j] = 1.6;
        }
        let fk = forward_kinematics(&model, &pose);
        assert!(
            self_penetration(&fk.mesh, &model) > 0.0,
            "expected overlap in folded pose"
        );
    }

    #[test]
    fn zero_radius_scale_is_zero_for_any_pose() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        for j in 0..16 {
            pose.intrinsics.theta[j] = 1.4;
        }
        let fk = forward_kinematics(&model, &pose);
        assert_eq!(self_penetration_scaled(&fk.mesh, &model, 0.0), 0.0);
    }
}
