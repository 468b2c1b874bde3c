//! Dataset persistence: a directory with `manifest.json` plus one OBJ per
//! object. Surface clouds are regenerated from the stored sampling seed, so
//! the round trip is bit-exact (OBJ floats are written in shortest
//! round-trip decimal form).

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{sample_surface, TriMesh};
use crate::hand::{HandExtrinsics, HandIntrinsics, HandPose};

use super::types::{AffordanceType, GraspInstance, ObjectModel, PartSegmentation};
use super::{Dataset, DatasetError};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    n_surface: usize,
    objects: Vec<ObjectRecord>,
    instances: Vec<InstanceRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    id: String,
    obj_file: String,
    scale: f64,
    sample_seed: u64,
    part_names: Vec<String>,
    point_part_ids: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRecord {
    translation: [f64; 3],
    /// row-major rotation matrix
    rotation: [f64; 9],
    theta: [f64; 16],
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    id: usize,
    object_id: String,
    instruction: String,
    affordance: AffordanceType,
    contact_part_id: u8,
    pose: PoseRecord,
}

impl PoseRecord {
    fn from_pose(p: &HandPose) -> Self {
        let m = p.extrinsics.rotation_matrix();
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = m[(r, c)];
            }
        }
        Self {
            translation: [
                p.extrinsics.translation.x,
                p.extrinsics.translation.y,
                p.extrinsics.translation.z,
            ],
            rotation,
            theta: p.intrinsics.theta,
        }
    }

    fn to_pose(&self) -> Result<HandPose, DatasetError> {
        let m = Matrix3::from_row_slice(&self.rotation);
        let ext = HandExtrinsics::new(Vector3::from_row_slice(&self.translation), m)
            .map_err(|e| DatasetError::Manifest(e.to_string()))?;
        Ok(HandPose {
            extrinsics: ext,
            intrinsics: HandIntrinsics { theta: self.theta },
        })
    }
}

/// Writes `manifest.json` plus one OBJ per object. The surface cloud is
/// not stored; the manifest records the sampling seed and the load path
/// regenerates it bit-exactly from the (losslessly written) mesh.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir.join("objects"))?;
    let mut objects = Vec::new();
    for (id, obj) in &dataset.objects {
        let obj_file = format!("objects/{id}.obj");
        obj.mesh.save_obj(&dir.join(&obj_file))?;
        objects.push(ObjectRecord {
            id: id.clone(),
            obj_file,
            scale: obj.scale,
            sample_seed: obj.sample_seed,
            part_names: obj.segmentation.part_names.clone(),
            point_part_ids: obj.segmentation.point_part_ids.clone(),
        });
    }
    let instances = dataset
        .instances
        .iter()
        .map(|i| InstanceRecord {
            id: i.id,
            object_id: i.object_id.clone(),
            instruction: i.instruction.clone(),
            affordance: i.affordance,
            contact_part_id: i.contact_part_id,
            pose: PoseRecord::from_pose(&i.pose),
        })
        .collect();
    let manifest = Manifest {
        schema_version: DATASET_SCHEMA_VERSION,
        n_surface: dataset
            .objects
            .values()
            .next()
            .map(|o| o.surface.len())
            .unwrap_or(2048),
        objects,
        instances,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| DatasetError::Manifest(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|_| DatasetError::MissingFile(manifest_path.display().to_string()))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(DatasetError::Manifest(format!(
            "dataset schema version {} (expected {DATASET_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let mut dataset = Dataset::default();
    for rec in manifest.objects {
        let path = dir.join(&rec.obj_file);
        if !path.exists() {
            return Err(DatasetError::MissingFile(path.display().to_string()));
        }
        let mesh = TriMesh::load_obj(&path)?;
        let surface = sample_surface(&mesh, manifest.n_surface, rec.sample_seed)?;
        let segmentation = PartSegmentation {
            point_part_ids: rec.point_part_ids,
            part_names: rec.part_names,
        };
        segmentation.validate(surface.len())?;
        dataset.objects.insert(
            rec.id.clone(),
            ObjectModel {
                id: rec.id,
                mesh,
                surface,
                segmentation,
                scale: rec.scale,
                sample_seed: rec.sample_seed,
            },
        );
    }
    for rec in manifest.instances {
        if !dataset.objects.contains_key(&rec.object_id) {
            return Err(DatasetError::Manifest(format!(
                "instance {} references unknown object {:?}",
                rec.id, rec.object_id
            )));
        }
        dataset.instances.push(GraspInstance {
            id: rec.id,
            object_id: rec.object_id,
            instruction: rec.instruction,
            pose: rec.pose.to_pose()?,
            affordance: rec.affordance,
            contact_part_id: rec.contact_part_id,
        });
    }
    Ok(dataset)
}
