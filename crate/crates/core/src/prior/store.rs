//! Persistent cluster store: everything retrieval needs at query time
//! (membership, centroids, representative intrinsics, contact-map
//! distributions, BPS descriptors), serialized to JSON for reuse across
//! CLI runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AffordanceType, Dataset};
use crate::hand::HandModel;

use super::kmeans::cluster_dataset;
use super::retrieve::{cluster_contact_maps, part_descriptor};
use super::contact::ContactMapDistribution;
use super::PriorError;

pub const CLUSTER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredCluster {
    pub id: usize,
    pub affordance: AffordanceType,
    pub member_ids: Vec<usize>,
    pub centroid_obb: [f64; 3],
    pub centroid_theta: [f64; 16],
    pub representative_id: usize,
    pub representative_theta: [f64; 16],
    pub cmap_mu: Vec<f64>,
    pub cmap_sigma: Vec<f64>,
    /// BPS descriptor of the representative's contact part.
    pub representative_bps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterStore {
    pub schema_version: u32,
    pub k_per_type: usize,
    pub tau: f64,
    pub hand_vertex_count: usize,
    pub clusters: Vec<StoredCluster>,
}

impl ClusterStore {
    pub fn save(&self, path: &Path) -> Result<(), PriorError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| PriorError::Store(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PriorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PriorError::Store(format!("cannot read {}: {e}", path.display())))?;
        let store: ClusterStore =
            serde_json::from_str(&text).map_err(|e| PriorError::Store(e.to_string()))?;
        if store.schema_version != CLUSTER_SCHEMA_VERSION {
            return Err(PriorError::Store(format!(
                "cluster store schema version {} (expected {CLUSTER_SCHEMA_VERSION})",
                store.schema_version
            )));
        }
        Ok(store)
    }
}

/// Clusters the dataset and precomputes each cluster's prior ingredients.
pub fn build_cluster_store(
    dataset: &Dataset,
    model: &HandModel,
    k_per_type: usize,
    tau: f64,
    seed: u64,
) -> Result<ClusterStore, PriorError> {
    let clusters = cluster_dataset(dataset, k_per_type, seed)?;
    let mut stored = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let maps = cluster_contact_maps(c, dataset, model, tau)?;
        let dist = ContactMapDistribution::from_maps(&maps);
        let rep = dataset.instance(c.representative_id)?;
        let rep_part = dataset.instance_part_cloud(rep)?;
        stored.push(StoredCluster {
            id: c.id,
            affordance: c.affordance,
            member_ids: c.member_ids.clone(),
            centroid_obb: c.centroid_obb.extents,
            centroid_theta: c.centroid_theta.theta,
            representative_id: c.representative_id,
            representative_theta: rep.pose.intrinsics.theta,
            cmap_mu: dist.mu,
            cmap_sigma: dist.sigma,
            representative_bps: part_descriptor(&rep_part)?,
        });
    }
    Ok(ClusterStore {
        schema_version: CLUSTER_SCHEMA_VERSION,
        k_per_type,
        tau,
        hand_vertex_count: model.vertex_count(),
        clusters: stored,
    })
}
