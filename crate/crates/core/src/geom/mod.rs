//! Foundational 3D types and queries: point clouds, triangle meshes,
//! surface sampling, oriented bounding boxes, exact nearest-neighbor
//! indexing, and the basis-point-set part descriptor.

mod bps;
mod cloud;
mod kdtree;
mod mesh;
mod obb;
mod sample;
pub mod shapes;

pub use bps::{bps_basis, bps_descriptor, cosine_similarity, BPS_BASIS_SIZE};
pub use cloud::PointCloud;
pub use kdtree::{nearest_distance, NnIndex};
pub use mesh::TriMesh;
pub use obb::{compute_obb, ObbSize};
pub use sample::sample_surface;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("mesh load failed: {0}")]
    MeshLoad(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Signed gap of `point` against an oriented surface sample.
///
/// Returns `(surface_point - point) · normal`: positive when the point sits
/// behind the surface (penetrating), negative when it is on the outside.
pub fn signed_gap(
    point: &Point3<f64>,
    surface_point: &Point3<f64>,
    surface_normal: &Vector3<f64>,
) -> Result<f64, GeomError> {
    let len = surface_normal.norm();
    if (len - 1.0).abs() > 1e-6 {
        return Err(GeomError::InvalidInput(format!(
            "surface normal must be unit length, got |n| = {len}"
        )));
    }
    Ok((surface_point - point).dot(surface_normal))
}
