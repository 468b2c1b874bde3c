//! Part accuracy: does the hand contact the object at the annotated part.

use crate::dataset::ObjectModel;
use crate::geom::NnIndex;
use crate::hand::HandMesh;

/// Hand vertices within `contact_eps` of the object surface (exact
/// mesh distance) count as contacts; the fraction is the share whose
/// nearest sampled surface point carries the ground-truth part label.
/// Success needs a strict majority and at least one contact.
pub fn part_accuracy(
    hand: &HandMesh,
    object: &ObjectModel,
    gt_part_id: u8,
    contact_eps: f64,
) -> (bool, f64) {
    let index = NnIndex::build(&object.surface.points);
    let results = crate::exec::map_indexed(hand.vertices.len(), |i| {
        let v = &hand.vertices[i];
        // cheap reject via the sampled cloud before the exact mesh query
        let (d_sample, id) = index.nearest(v).expect("object surface is nonempty");
        if d_sample > contact_eps + 0.02 {
            return None;
        }
        if object.mesh.surface_distance(v) <= contact_eps {
            Some(object.segmentation.point_part_ids[id] == gt_part_id)
        } else {
            None
        }
    });
    let mut contacts = 0usize;
    let mut on_part = 0usize;
    for r in results.into_iter().flatten() {
        contacts += 1;
        if r {
            on_part += 1;
        }
    }
    if contacts == 0 {
        return (false, 0.0);
    }
    let fraction = on_part as f64 / contacts as f64;
    (fraction > 0.5, fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PartSegmentation;
    use crate::geom::{sample_surface, shapes};
    use nalgebra::{Point3, Vector3};

    fn two_part_object() -> ObjectModel {
        // body at x < 0, handle at x > 0 (two cubes side by side)
        let mut mesh = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 1);
        mesh.transform(&nalgebra::Rotation3::identity(), &Vector3::new(-0.04, 0.0, 0.0));
        let mut handle = shapes::box_mesh(&Vector3::new(0.01, 0.01, 0.01), 1);
        handle.transform(&nalgebra::Rotation3::identity(), &Vector3::new(0.04, 0.0, 0.0));
        mesh.merge(&handle);
        let surface = sample_surface(&mesh, 512, 4).unwrap();
        let labels: Vec<u8> = surface
            .points
            .iter()
            .map(|p| if p.x > 0.0 { 1 } else { 0 })
            .collect();
        ObjectModel {
            id: "test".into(),
            mesh,
            surface,
            segmentation: PartSegmentation {
                point_part_ids: labels,
                part_names: vec!["body".into(), "handle".into()],
            },
            scale: 1.0,
            sample_seed: 4,
        }
    }

    fn toy_hand(points: Vec<Point3<f64>>) -> HandMesh {
        let n = points.len();
        HandMesh {
            vertices: points,
            normals: vec![Vector3::z(); n],
            link_ids: vec![0; n],
        }
    }

    #[test]
    fn all_contacts_on_part_is_full_accuracy() {
        let obj = two_part_object();
        let hand = toy_hand(vec![
            Point3::new(0.05, 0.0, 0.0),
            Point3::new(0.04, 0.011, 0.0),
        ]);
        let (ok, frac) = part_accuracy(&hand, &obj, 1, 0.005);
        assert!(ok);
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn no_contact_is_failure_with_zero_fraction() {
        let obj = two_part_object();
        let hand = toy_hand(vec![Point3::new(0.5, 0.5, 0.5)]);
        let (ok, frac) = part_accuracy(&hand, &obj, 1, 0.005);
        assert!(!ok);
        assert_eq!(frac, 0.0);
    }

    #[test]
    fn three_of_five_contacts_on_part() {
        let obj = two_part_object();
        // 3 touching the handle cube, 2 touching the body cube
        let hand = toy_hand(vec![
            Point3::new(0.051, 0.0, 0.0),
            Point3::new(0.04, 0.0105, 0.0),
            Point3::new(0.04, -0.0105, 0.0),
            Point3::new(-0.04, 0.0305, 0.0),
            Point3::new(-0.04, -0.0305, 0.0),
        ]);
        let (ok, frac) = part_accuracy(&hand, &obj, 1, 0.005);
        assert!(ok);
        assert!((frac - 0.6).abs() < 1e-12, "frac = {frac}");
    }
}
