//! Grasp-instance records and the object model they reference.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{PointCloud, TriMesh};
use crate::hand::HandPose;

use super::DatasetError;

/// Closed set of grasp-interaction categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AffordanceType {
    HandleGrip,
    Twist,
    WrapAroundGrip,
    BaseSupport,
    TriggerSqueeze,
}

pub const AFFORDANCE_TYPES: [AffordanceType; 5] = [
    AffordanceType::HandleGrip,
    AffordanceType::Twist,
    AffordanceType::WrapAroundGrip,
    AffordanceType::BaseSupport,
    AffordanceType::TriggerSqueeze,
];

impl AffordanceType {
    pub fn as_str(&self) -> &'static str {
        match self {
            AffordanceType::HandleGrip => "handle-grip",
            AffordanceType::Twist => "twist",
            AffordanceType::WrapAroundGrip => "wrap-around-grip",
            AffordanceType::BaseSupport => "base-support",
            AffordanceType::TriggerSqueeze => "trigger-squeeze",
        }
    }

    /// Parses the canonical names plus the common aliases a language model
    /// tends to produce ("handle-grasp" for handle-grip and so on).
    pub fn parse(s: &str) -> Result<Self, DatasetError> {
        let norm = s.trim().to_lowercase().replace([' ', '_'], "-");
        match norm.as_str() {
            "handle-grip" | "handle-grasp" | "handle" => Ok(AffordanceType::HandleGrip),
            "twist" | "rotate" => Ok(AffordanceType::Twist),
            "wrap-around-grip" | "wrap-around" | "wrap" | "wrap-grip" => {
                Ok(AffordanceType::WrapAroundGrip)
            }
            "base-support" | "support" | "base" => Ok(AffordanceType::BaseSupport),
            "trigger-squeeze" | "trigger" | "squeeze" => Ok(AffordanceType::TriggerSqueeze),
            _ => Err(DatasetError::UnknownAffordance(s.to_string())),
        }
    }
}

impl fmt::Display for AffordanceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-sampled-point part labels plus the id -> name table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSegmentation {
    /// One part id per sampled surface point.
    pub point_part_ids: Vec<u8>,
    /// Unique, nonempty part names; index is the part id.
    pub part_names: Vec<String>,
}

impl PartSegmentation {
    pub fn validate(&self, n_points: usize) -> Result<(), DatasetError> {
        if self.point_part_ids.len() != n_points {
            return Err(DatasetError::Invalid(format!(
                "segmentation labels {} points, surface has {n_points}",
                self.point_part_ids.len()
            )));
        }
        if self.part_names.is_empty() || self.part_names.iter().any(|n| n.is_empty()) {
            return Err(DatasetError::Invalid("empty part name".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &self.part_names {
            if !seen.insert(n) {
                return Err(DatasetError::Invalid(format!("duplicate part name {n:?}")));
            }
        }
        if let Some(&bad) = self
            .point_part_ids
            .iter()
            .find(|&&id| id as usize >= self.part_names.len())
        {
            return Err(DatasetError::Invalid(format!(
                "point labeled with unknown part id {bad}"
            )));
        }
        Ok(())
    }

    /// Indices of the points belonging to `part_id`.
    pub fn part_point_indices(&self, part_id: u8) -> Vec<usize> {
        self.point_part_ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == part_id)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A 3D object: mesh, sampled oriented surface cloud, and part labels.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub id: String,
    pub mesh: TriMesh,
    /// Sampled surface points with normals; length is the configured N.
    /// Always equals `sample_surface(mesh, n, sample_seed)` so persistence
    /// can regenerate it bit-exactly.
    pub surface: PointCloud,
    pub segmentation: PartSegmentation,
    /// Canonical scale factor applied when the object was normalized.
    pub scale: f64,
    /// Seed the surface cloud was sampled with.
    pub sample_seed: u64,
}

impl ObjectModel {
    pub fn part_cloud(&self, part_id: u8) -> PointCloud {
        self.surface
            .select(&self.segmentation.part_point_indices(part_id))
    }

    pub fn part_id_by_name(&self, name: &str) -> Option<u8> {
        self.segmentation
            .part_names
            .iter()
            .position(|n| n == name)
            .map(|i| i as u8)
    }
}

/// One dataset record: instruction, object, pose, affordance annotation,
/// contact part, and the segmentation it references.
#[derive(Debug, Clone)]
pub struct GraspInstance {
    pub id: usize,
    pub instruction: String,
    pub object_id: String,
    pub pose: HandPose,
    pub affordance: AffordanceType,
    pub contact_part_id: u8,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affordance_round_trips() {
        for a in AFFORDANCE_TYPES {
            assert_eq!(AffordanceType::parse(a.as_str()).unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            let back: AffordanceType = serde_json::from_str(&json).unwrap();
            assert_eq!(back, a);
        }
    }

    #[test]
    fn affordance_rejects_unknown() {
        assert!(AffordanceType::parse("point").is_err());
        assert!(AffordanceType::parse("").is_err());
    }

    #[test]
    fn handle_grasp_alias_maps_to_handle_grip() {
        assert_eq!(
            AffordanceType::parse("handle-grasp").unwrap(),
            AffordanceType::HandleGrip
        );
    }

    #[test]
    fn segmentation_validation() {
        let seg = PartSegmentation {
            point_part_ids: vec![0, 1, 0],
            part_names: vec!["body".into(), "handle".into()],
        };
        assert!(seg.validate(3).is_ok());
        assert!(seg.validate(2).is_err());

        let dup = PartSegmentation {
            point_part_ids: vec![0],
            part_names: vec!["a".into(), "a".into()],
        };
        assert!(dup.validate(1).is_err());

        let bad_id = PartSegmentation {
            point_part_ids: vec![7],
            part_names: vec!["a".into()],
        };
        assert!(bad_id.validate(1).is_err());
    }
}
