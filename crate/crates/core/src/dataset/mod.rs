//! Grasp-instance records, dataset persistence, and the procedural
//! synthetic dataset generator that provides desk-scale training and
//! retrieval data.

mod io;
mod synth;
mod types;

pub use io::{load_dataset, save_dataset, DATASET_SCHEMA_VERSION};
pub use synth::{close_fingers, generate_synthetic_dataset, SynthConfig};
pub use types::{
    AffordanceType, GraspInstance, ObjectModel, PartSegmentation, AFFORDANCE_TYPES,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown affordance {0:?}")]
    UnknownAffordance(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error(transparent)]
    Hand(#[from] crate::hand::HandError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// In-memory dataset: objects keyed by id plus the instance records.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub objects: BTreeMap<String, ObjectModel>,
    pub instances: Vec<GraspInstance>,
}

impl Dataset {
    pub fn object(&self, id: &str) -> Result<&ObjectModel, DatasetError> {
        self.objects
            .get(id)
            .ok_or_else(|| DatasetError::UnknownObject(id.to_string()))
    }

    pub fn instance(&self, id: usize) -> Result<&GraspInstance, DatasetError> {
        self.instances
            .iter()
            .find(|i| i.id == id)
            .ok_or_else(|| DatasetError::Invalid(format!("no instance with id {id}")))
    }

    /// Contact-part point cloud of an instance.
    pub fn instance_part_cloud(
        &self,
        inst: &GraspInstance,
    ) -> Result<crate::geom::PointCloud, DatasetError> {
        let obj = self.object(&inst.object_id)?;
        Ok(obj.part_cloud(inst.contact_part_id))
    }

    /// Disjoint, covering train/val/test split of instance ids, 8:1:1 by
    /// count, shuffled deterministically by seed.
    pub fn split(&self, seed: u64) -> DatasetSplit {
        let mut ids: Vec<usize> = self.instances.iter().map(|i| i.id).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let n_val = n / 10;
        let n_test = n / 10;
        let n_train = n - n_val - n_test;
        DatasetSplit {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        }
    }

    /// Restriction of this dataset to the given instance ids (objects are
    /// kept whole; they carry no grasp information).
    pub fn subset(&self, ids: &[usize]) -> Dataset {
        let keep: std::collections::HashSet<usize> = ids.iter().copied().collect();
        Dataset {
            objects: self.objects.clone(),
            instances: self
                .instances
                .iter()
                .filter(|i| keep.contains(&i.id))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[cfg(test)]
mod split_tests {
    use super::*;

    fn tiny_dataset(n: usize) -> Dataset {
        let mut d = Dataset::default();
        for id in 0..n {
            d.instances.push(GraspInstance {
                id,
                instruction: String::new(),
                object_id: "o".into(),
                pose: crate::hand::HandPose::rest(),
                affordance: AffordanceType::Twist,
                contact_part_id: 0,
            });
        }
        d
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let d = tiny_dataset(100);
        let s = d.split(3);
        assert_eq!(s.train.len(), 80);
        assert_eq!(s.val.len(), 10);
        assert_eq!(s.test.len(), 10);
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let d = tiny_dataset(50);
        assert_eq!(d.split(7).train, d.split(7).train);
    }
}
