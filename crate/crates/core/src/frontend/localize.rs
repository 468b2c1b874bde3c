//! Grounding a part name into part geometry via the object's segmentation:
//! exact name match, then case-insensitive, then a small synonym table.

use crate::dataset::ObjectModel;
use crate::geom::PointCloud;

use super::FrontendError;

/// Synonym groups tried after exact and case-insensitive matching.
const SYNONYMS: &[&[&str]] = &[
    &["handle", "grip", "bar"],
    &["cap", "lid", "knob", "top"],
    &["body", "base", "bottom"],
    &["trigger", "lever"],
];

/// Resolves `part_name` against the object's part table and returns that
/// part's sampled points and normals.
pub fn localize_part(object: &ObjectModel, part_name: &str) -> Result<PointCloud, FrontendError> {
    let names = &object.segmentation.part_names;
    // exact
    if let Some(id) = names.iter().position(|n| n == part_name) {
        return Ok(object.part_cloud(id as u8));
    }
    // case-insensitive
    let wanted = part_name.to_lowercase();
    if let Some(id) = names.iter().position(|n| n.to_lowercase() == wanted) {
        return Ok(object.part_cloud(id as u8));
    }
    // synonym tier: the requested name and a part name share a group
    for group in SYNONYMS {
        if group.contains(&wanted.as_str()) {
            for (id, name) in names.iter().enumerate() {
                if group.contains(&name.to_lowercase().as_str()) {
                    return Ok(object.part_cloud(id as u8));
                }
            }
        }
    }
    Err(FrontendError::PartNotFound {
        requested: part_name.to_string(),
        available: names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PartSegmentation;
    use crate::geom::{sample_surface, shapes};
    use nalgebra::Vector3;

    fn mug_like() -> ObjectModel {
        let mut mesh = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 1);
        let mut handle = shapes::box_mesh(&Vector3::new(0.008, 0.008, 0.02), 1);
        handle.transform(&nalgebra::Rotation3::identity(), &Vector3::new(0.045, 0.0, 0.0));
        mesh.merge(&handle);
        let surface = sample_surface(&mesh, 256, 9).unwrap();
        let labels: Vec<u8> = surface
            .points
            .iter()
            .map(|p| if p.x > 0.032 { 1 } else { 0 })
            .collect();
        ObjectModel {
            id: "mug".into(),
            mesh,
            surface,
            segmentation: PartSegmentation {
                point_part_ids: labels,
                part_names: vec!["body".into(), "handle".into()],
            },
            scale: 1.0,
            sample_seed: 9,
        }
    }

    #[test]
    fn exact_match_returns_only_part_points() {
        let obj = mug_like();
        let part = localize_part(&obj, "handle").unwrap();
        assert!(!part.is_empty());
        assert!(part.points.iter().all(|p| p.x > 0.032));
    }

    #[test]
    fn case_insensitive_and_synonym_tiers() {
        let obj = mug_like();
        assert!(!localize_part(&obj, "Handle").unwrap().is_empty());
        // "grip" reaches "handle" through the synonym table
        assert!(!localize_part(&obj, "grip").unwrap().is_empty());
    }

    #[test]
    fn missing_part_error_lists_available_names() {
        let obj = mug_like();
        let err = localize_part(&obj, "spout").unwrap_err();
        match err {
            FrontendError::PartNotFound { available, .. } => {
                assert_eq!(available, vec!["body".to_string(), "handle".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parts_partition_the_surface() {
        let obj = mug_like();
        let a = localize_part(&obj, "body").unwrap();
        let b = localize_part(&obj, "handle").unwrap();
        assert_eq!(a.len() + b.len(), obj.surface.len());
    }
}
