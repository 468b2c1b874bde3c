//! Grasping-prior retrieval: instance dissimilarity, per-affordance
//! k-means clustering, contact maps, prior construction, and query-time
//! retrieval (OBB-based default, BPS-based alternative).

mod contact;
mod dissim;
mod kmeans;
mod retrieve;
mod store;

pub use contact::{contact_map, ContactMap, ContactMapDistribution, DEFAULT_TAU};
pub use dissim::{dissimilarity, GraspFeature};
pub use kmeans::{cluster_dataset, GraspCluster};
pub use retrieve::{build_prior, retrieve, GraspPrior, RetrievalMode};
pub use store::{build_cluster_store, ClusterStore, StoredCluster, CLUSTER_SCHEMA_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no cluster with affordance {0}")]
    RetrievalMiss(crate::dataset::AffordanceType),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error("store error: {0}")]
    Store(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
