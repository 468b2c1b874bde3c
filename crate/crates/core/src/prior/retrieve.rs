//! Grasping-prior construction and query-time retrieval.

use serde::{Deserialize, Serialize};

use crate::dataset::{AffordanceType, Dataset};
use crate::geom::{bps_basis, bps_descriptor, compute_obb, cosine_similarity, NnIndex, PointCloud};
use crate::hand::{forward_kinematics, HandIntrinsics, HandModel};

use super::contact::{contact_map, ContactMap, ContactMapDistribution};
use super::kmeans::GraspCluster;
use super::store::ClusterStore;
use super::PriorError;

/// The retrieved grasping prior: contact-part geometry, representative
/// intrinsics, and the cluster's contact-map distribution.
#[derive(Debug, Clone)]
pub struct GraspPrior {
    pub contact_part: PointCloud,
    pub representative_intrinsics: HandIntrinsics,
    pub cmap: ContactMapDistribution,
    pub cluster_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Obb,
    Bps,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "obb" => Ok(RetrievalMode::Obb),
            "bps" => Ok(RetrievalMode::Bps),
            other => Err(format!("unknown retrieval mode {other:?} (use obb|bps)")),
        }
    }
}

/// Contact maps of every member of a cluster, each against its own
/// hand-object pair.
pub fn cluster_contact_maps(
    cluster: &GraspCluster,
    dataset: &Dataset,
    model: &HandModel,
    tau: f64,
) -> Result<Vec<ContactMap>, PriorError> {
    let mut maps = Vec::with_capacity(cluster.member_ids.len());
    for &id in &cluster.member_ids {
        let inst = dataset.instance(id)?;
        let obj = dataset.object(&inst.object_id)?;
        let index = NnIndex::build(&obj.surface.points);
        let fk = forward_kinematics(model, &inst.pose);
        maps.push(contact_map(&fk.mesh, &index, tau));
    }
    Ok(maps)
}

/// Assembles the grasping prior of a cluster for a query part.
pub fn build_prior(
    cluster: &GraspCluster,
    dataset: &Dataset,
    model: &HandModel,
    tau: f64,
    query_part: &PointCloud,
) -> Result<GraspPrior, PriorError> {
    if cluster.member_ids.is_empty() {
        return Err(PriorError::InvalidInput("empty cluster".into()));
    }
    if query_part.is_empty() {
        return Err(PriorError::InvalidInput("empty query part".into()));
    }
    let representative = dataset.instance(cluster.representative_id)?;
    let maps = cluster_contact_maps(cluster, dataset, model, tau)?;
    Ok(GraspPrior {
        contact_part: query_part.clone(),
        representative_intrinsics: representative.pose.intrinsics.clone(),
        cmap: ContactMapDistribution::from_maps(&maps),
        cluster_id: cluster.id,
    })
}

/// Centers a cloud on its centroid and scales it into the unit sphere.
pub fn normalize_to_unit_sphere(cloud: &PointCloud) -> PointCloud {
    let c = cloud.centroid();
    let r = cloud.radius().max(1e-12);
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| nalgebra::Point3::from((p - c) / r))
            .collect(),
        normals: cloud.normals.clone(),
    }
}

/// BPS descriptor of a part after unit-sphere normalization.
pub fn part_descriptor(part: &PointCloud) -> Result<Vec<f64>, PriorError> {
    let basis = bps_basis();
    Ok(bps_descriptor(&normalize_to_unit_sphere(part), &basis)?)
}

/// Picks the best-matching cluster of the requested affordance and returns
/// its prior bound to the query part.
///
/// OBB mode minimizes the sorted-extent distance to the cluster centroid;
/// BPS mode maximizes cosine similarity against the cluster
/// representative's part descriptor. Ties resolve to the lowest cluster id.
pub fn retrieve(
    affordance: AffordanceType,
    query_part: &PointCloud,
    store: &ClusterStore,
    mode: RetrievalMode,
) -> Result<GraspPrior, PriorError> {
    let candidates: Vec<&super::store::StoredCluster> = store
        .clusters
        .iter()
        .filter(|c| c.affordance == affordance)
        .collect();
    if candidates.is_empty() {
        return Err(PriorError::RetrievalMiss(affordance));
    }
    let winner = match mode {
        RetrievalMode::Obb => {
            let query_obb = compute_obb(query_part)?;
            let mut best: (f64, &super::store::StoredCluster) = (f64::INFINITY, candidates[0]);
            for c in &candidates {
                let d = query_obb.distance(&crate::geom::ObbSize::new(c.centroid_obb));
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        }
        RetrievalMode::Bps => {
            let query_desc = part_descriptor(query_part)?;
            let mut best: (f64, &super::store::StoredCluster) = (f64::NEG_INFINITY, candidates[0]);
            for c in &candidates {
                let s = cosine_similarity(&query_desc, &c.representative_bps);
                if s > best.0 {
                    best = (s, c);
                }
            }
            best.1
        }
    };
    Ok(GraspPrior {
        contact_part: query_part.clone(),
        representative_intrinsics: HandIntrinsics {
            theta: winner.representative_theta,
        },
        cmap: ContactMapDistribution {
            mu: winner.cmap_mu.clone(),
            sigma: winner.cmap_sigma.clone(),
        },
        cluster_id: winner.id,
    })
}
