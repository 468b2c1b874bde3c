//! Oriented bounding box extents via PCA.
//!
//! Only the sorted extents are ever consumed (they act as a
//! scale-and-rotation-invariant part-shape signature), so the box is
//! PCA-axis-aligned rather than minimum-volume.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeomError, PointCloud};

/// Sorted extents of an oriented bounding box, ascending, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbSize {
    pub extents: [f64; 3],
}

impl ObbSize {
    pub fn new(mut extents: [f64; 3]) -> Self {
        extents.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { extents }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.extents)
    }

    /// Euclidean distance between two sorted-extent signatures.
    pub fn distance(&self, other: &ObbSize) -> f64 {
        (self.as_vector() - other.as_vector()).norm()
    }
}

/// PCA-aligned oriented bounding box extents, sorted ascending.
///
/// Degenerate inputs (collinear or coplanar sets) yield zero entries;
/// only an empty cloud is an error.
pub fn compute_obb(points: &PointCloud) -> Result<ObbSize, GeomError> {
    if points.is_empty() {
        return Err(GeomError::InvalidInput(
            "OBB of an empty point cloud".into(),
        ));
    }
    let n = points.len() as f64;
    let mean = points.centroid();
    let mut cov = Matrix3::zeros();
    for p in &points.points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &points.points {
        let d = p - mean;
        for k in 0..3 {
            let axis = eig.eigenvectors.column(k);
            let t = d.dot(&axis);
            lo[k] = lo[k].min(t);
            hi[k] = hi[k].max(t);
        }
    }
    Ok(ObbSize::new([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Rotation3};

    fn cloud_of(points: Vec<Point3<f64>>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![Vector3::z(); n]).unwrap()
    }

    fn box_corners(ex: f64, ey: f64, ez: f64) -> Vec<Point3<f64>> {
        let mut out = Vec::new();
        for &x in &[0.0, ex] {
            for &y in &[0.0, ey] {
                for &z in &[0.0, ez] {
                    out.push(Point3::new(x, y, z));
                }
            }
        }
        out
    }

    #[test]
    fn unit_cube_corners() {
        let obb = compute_obb(&cloud_of(box_corners(1.0, 1.0, 1.0))).unwrap();
        for e in obb.extents {
            assert!((e - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotated_box_recovers_extents() {
        let rot = Rotation3::from_euler_angles(0.7, -1.1, 2.3);
        let pts: Vec<Point3<f64>> = box_corners(2.0, 1.0, 0.5)
            .into_iter()
            .map(|p| rot * p)
            .collect();
        let obb = compute_obb(&cloud_of(pts)).unwrap();
        let expect = [0.5, 1.0, 2.0];
        for (e, x) in obb.extents.iter().zip(expect) {
            assert!((e - x).abs() < 1e-6, "{:?}", obb.extents);
        }
    }

    #[test]
    fn identical_points_give_zero_extents() {
        let obb = compute_obb(&cloud_of(vec![Point3::new(0.3, 0.1, -0.2); 5])).unwrap();
        assert_eq!(obb.extents, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let pc = PointCloud {
            points: vec![],
            normals: vec![],
        };
        assert!(compute_obb(&pc).is_err());
    }
}
