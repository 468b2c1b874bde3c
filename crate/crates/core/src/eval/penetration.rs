//! Penetration depth: deepest hand vertex inside the object.

use crate::geom::TriMesh;
use crate::hand::HandMesh;

/// Maximum over hand vertices inside the object of the distance to the
/// object surface, in centimeters; 0 when no vertex is inside.
pub fn penetration_depth(hand: &HandMesh, object: &TriMesh) -> f64 {
    let (lo, hi) = object.aabb();
    let depths = crate::exec::map_indexed(hand.vertices.len(), |i| {
        let v = &hand.vertices[i];
        if v.x < lo.x || v.y < lo.y || v.z < lo.z || v.x > hi.x || v.y > hi.y || v.z > hi.z {
            return 0.0;
        }
        if object.contains(v) {
            object.surface_distance(v)
        } else {
            0.0
        }
    });
    depths.into_iter().fold(0.0, f64::max) * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;
    use crate::hand::{forward_kinematics, HandModel, HandPose};
    use nalgebra::{Point3, Vector3};

    #[test]
    fn far_away_hand_has_zero_depth() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        pose.extrinsics.translation = Vector3::new(1.0, 0.0, 0.0);
        let fk = forward_kinematics(&model, &pose);
        let cube = shapes::box_mesh(&Vector3::new(0.05, 0.05, 0.05), 1);
        assert_eq!(penetration_depth(&fk.mesh, &cube), 0.0);
    }

    #[test]
    fn constructed_vertex_depth_is_exact() {
        // a tiny "hand" of one point 0.7 cm inside a cube face
        let hand = HandMesh {
            vertices: vec![Point3::new(0.05 - 0.007, 0.0, 0.0)],
            normals: vec![Vector3::z()],
            link_ids: vec![0],
        };
        let cube = shapes::box_mesh(&Vector3::new(0.05, 0.05, 0.05), 1);
        let d = penetration_depth(&hand, &cube);
        assert!((d - 0.7).abs() < 1e-9, "d = {d}");
    }

    #[test]
    fn matches_brute_force_scan() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        pose.extrinsics.translation = Vector3::new(0.0, -0.02, 0.0);
        let fk = forward_kinematics(&model, &pose);
        let cube = shapes::box_mesh(&Vector3::new(0.04, 0.04, 0.04), 2);
        let fast = penetration_depth(&fk.mesh, &cube);
        // independent brute force: winding-number inside test plus full
        // point-triangle scan
        let mut expect: f64 = 0.0;
        for v in &fk.mesh.vertices {
            if cube.winding_number(v).abs() > 0.5 {
                expect = expect.max(cube.surface_distance(v));
            }
        }
        assert_eq!(fast, expect * 100.0);
        assert!(fast > 0.0);
    }
}
