//! Oriented point clouds.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::GeomError;

/// A surface point cloud with per-point unit normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl PointCloud {
    /// Builds a cloud, checking the type invariants: equal lengths, finite
    /// coordinates, unit-length normals within 1e-6.
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self, GeomError> {
        if points.len() != normals.len() {
            return Err(GeomError::InvalidInput(format!(
                "points/normals length mismatch: {} vs {}",
                points.len(),
                normals.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(GeomError::InvalidInput(format!("non-finite point at {i}")));
            }
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(GeomError::InvalidInput(format!(
                    "normal at {i} is not unit length"
                )));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let mut sum = Vector3::zeros();
        for p in &self.points {
            sum += p.coords;
        }
        Point3::from(sum / self.points.len().max(1) as f64)
    }

    /// Largest distance from the centroid to any point.
    pub fn radius(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| (p - c).norm())
            .fold(0.0, f64::max)
    }

    /// Sub-cloud at the given indices.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
        }
    }

    /// Rigidly transforms the cloud: `p -> R p + t`, normals by `R`.
    pub fn transformed(&self, rot: &nalgebra::Rotation3<f64>, t: &Vector3<f64>) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| rot * p + t).collect(),
            normals: self.normals.iter().map(|n| rot * n).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        let r = PointCloud::new(vec![Point3::origin()], vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_non_unit_normal() {
        let r = PointCloud::new(vec![Point3::origin()], vec![Vector3::new(0.0, 0.0, 0.5)]);
        assert!(r.is_err());
    }

    #[test]
    fn centroid_and_radius() {
        let pc = PointCloud::new(
            vec![Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)],
            vec![Vector3::z(), Vector3::z()],
        )
        .unwrap();
        assert_eq!(pc.centroid(), Point3::origin());
        assert_eq!(pc.radius(), 1.0);
    }
}
