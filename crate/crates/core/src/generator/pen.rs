//! Hand-object penetration penalty: for every object surface point, the
//! hinge of its signed gap against the nearest hand vertex, thresholded.

use crate::dataset::ObjectModel;
use crate::geom::NnIndex;
use crate::hand::HandMesh;

/// Pairs farther apart than this are skipped: the half-space gap
/// `(O - V) . n` only measures penetration while `V` is near `O`, and for
/// separated bodies back-facing surface points would otherwise register
/// huge spurious "penetrations".
pub const PEN_DISTANCE_GATE: f64 = 0.03;

/// `sum_i max(0, (O_i - V_i) . n_i - c_pen)` over object surface points,
/// where `V_i` is the hand vertex nearest to `O_i` and pairs beyond the
/// proximity gate are skipped. Zero when the hand is outside the object by
/// at least `c_pen` everywhere.
pub fn pen_loss(hand: &HandMesh, object: &ObjectModel, c_pen: f64) -> f64 {
    let hand_index = NnIndex::build(&hand.vertices);
    let mut total = 0.0;
    for (o, n) in object.surface.points.iter().zip(&object.surface.normals) {
        let (d, vi) = hand_index.nearest(o).expect("hand mesh is nonempty");
        if d > PEN_DISTANCE_GATE {
            continue;
        }
        let gap = (o - hand.vertices[vi]).dot(n) - c_pen;
        if gap > 0.0 {
            total += gap;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PartSegmentation;
    use crate::geom::{sample_surface, shapes};
    use crate::hand::{forward_kinematics, HandModel, HandPose};
    use nalgebra::{Point3, Vector3};

    fn ball_object(r: f64) -> ObjectModel {
        let mesh = shapes::sphere_mesh(r, 24, 16);
        let surface = sample_surface(&mesh, 256, 3).unwrap();
        let n = surface.len();
        ObjectModel {
            id: "ball".into(),
            mesh,
            surface,
            segmentation: PartSegmentation {
                point_part_ids: vec![0; n],
                part_names: vec!["body".into()],
            },
            scale: 1.0,
            sample_seed: 3,
        }
    }

    #[test]
    fn separated_bodies_have_zero_loss() {
        let model = HandModel::builtin();
        let mut pose = HandPose::rest();
        pose.extrinsics.translation = Vector3::new(0.0, 0.0, 0.5);
        let fk = forward_kinematics(&model, &pose);
        let obj = ball_object(0.03);
        assert_eq!(pen_loss(&fk.mesh, &obj, 0.005), 0.0);
    }

    #[test]
    fn hand_inside_object_is_penalized() {
        let model = HandModel::builtin();
        let fk = forward_kinematics(&model, &HandPose::rest());
        // large ball centered on the palm swallows it
        let obj = ball_object(0.09);
        assert!(pen_loss(&fk.mesh, &obj, 0.005) > 0.0);
    }

    #[test]
    fn matches_double_loop_reference_on_toy_pair() {
        // 50-ish object points vs a small constructed "hand"
        let obj = ball_object(0.02);
        let hand_pts: Vec<Point3<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                Point3::new(0.015 * t.cos(), 0.015 * t.sin(), 0.001 * i as f64 - 0.02)
            })
            .collect();
        let hand = HandMesh {
            vertices: hand_pts.clone(),
            normals: vec![Vector3::z(); hand_pts.len()],
            link_ids: vec![0; hand_pts.len()],
        };
        let c_pen = 0.003;
        let fast = pen_loss(&hand, &obj, c_pen);
        let mut expect = 0.0;
        for (o, n) in obj.surface.points.iter().zip(&obj.surface.normals) {
            let mut best = (f64::INFINITY, 0usize);
            for (i, v) in hand_pts.iter().enumerate() {
                let d = (v - o).norm_squared();
                if d < best.0 {
                    best = (d, i);
                }
            }
            if best.0.sqrt() > PEN_DISTANCE_GATE {
                continue;
            }
            expect += ((o - hand_pts[best.1]).dot(n) - c_pen).max(0.0);
        }
        assert!((fast - expect).abs() < 1e-12);
        assert!(fast > 0.0, "toy pair should overlap");
    }
}
