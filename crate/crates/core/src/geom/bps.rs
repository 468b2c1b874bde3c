//! Basis point set descriptors for part shapes.
//!
//! Component `k` is the distance from basis point `k` to the nearest input
//! point; descriptors are compared with cosine similarity. The shared basis
//! is 256 points drawn from the unit ball with a fixed seed — callers
//! normalize each part cloud into the unit sphere before encoding so parts
//! of different scales stay comparable.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeomError, NnIndex, PointCloud};

/// Number of basis points in the shared descriptor basis.
pub const BPS_BASIS_SIZE: usize = 256;

const BPS_BASIS_SEED: u64 = 0x6270_7331;

/// The fixed descriptor basis: `BPS_BASIS_SIZE` points from the unit ball.
pub fn bps_basis() -> Vec<Point3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(BPS_BASIS_SEED);
    let mut out = Vec::with_capacity(BPS_BASIS_SIZE);
    while out.len() < BPS_BASIS_SIZE {
        let p = Point3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        );
        if p.coords.norm_squared() <= 1.0 {
            out.push(p);
        }
    }
    out
}

/// Distance-to-nearest-input-point feature vector over the given basis.
pub fn bps_descriptor(points: &PointCloud, basis: &[Point3<f64>]) -> Result<Vec<f64>, GeomError> {
    if points.is_empty() {
        return Err(GeomError::InvalidInput(
            "BPS descriptor of an empty cloud".into(),
        ));
    }
    let index = NnIndex::build(&points.points);
    basis
        .iter()
        .map(|b| index.nearest(b).map(|(d, _)| d))
        .collect()
}

/// Cosine similarity between two descriptors; 0 when either is all-zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
