//! Area-weighted uniform surface sampling.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeomError, PointCloud, TriMesh};

/// Samples `n` points uniformly by area from the mesh surface; normals come
/// from the face normals. Deterministic for a fixed seed.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<PointCloud, GeomError> {
    if mesh.is_empty() {
        return Err(GeomError::InvalidInput(
            "cannot sample an empty mesh".into(),
        ));
    }
    if n == 0 {
        return Err(GeomError::InvalidInput("sample count must be >= 1".into()));
    }
    let mut cum: Vec<f64> = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cum.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen::<f64>() * total;
        let f = cum.partition_point(|&c| c < u).min(mesh.faces.len() - 1);
        let [ia, ib, ic] = mesh.faces[f];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        // square-root trick for uniform barycentric coordinates
        let r1: f64 = rng.gen::<f64>().sqrt();
        let r2: f64 = rng.gen();
        let p = a.coords * (1.0 - r1) + b.coords * (r1 * (1.0 - r2)) + c.coords * (r1 * r2);
        points.push(Point3::from(p));
        normals.push(mesh.face_normal(f));
    }
    PointCloud::new(points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;
    use nalgebra::Vector3;

    #[test]
    fn cube_points_lie_on_surface() {
        let cube = shapes::box_mesh(&Vector3::new(0.5, 0.5, 0.5), 1);
        let pc = sample_surface(&cube, 2048, 7).unwrap();
        assert_eq!(pc.len(), 2048);
        for p in &pc.points {
            assert!(cube.surface_distance(p) < 1e-9);
        }
    }

    #[test]
    fn single_triangle_single_point() {
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pc = sample_surface(&m, 1, 3).unwrap();
        assert_eq!(pc.len(), 1);
        assert!(m.surface_distance(&pc.points[0]) < 1e-12);
        assert!((pc.normals[0] - Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn sphere_mean_is_near_origin() {
        let sphere = shapes::sphere_mesh(1.0, 32, 16);
        let pc = sample_surface(&sphere, 4096, 11).unwrap();
        let mean = pc.centroid();
        assert!(mean.coords.norm() < 0.05, "|mean| = {}", mean.coords.norm());
    }

    #[test]
    fn deterministic_per_seed() {
        let cube = shapes::box_mesh(&Vector3::new(0.5, 0.5, 0.5), 1);
        let a = sample_surface(&cube, 64, 5).unwrap();
        let b = sample_surface(&cube, 64, 5).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn face_frequency_proportional_to_area() {
        // two triangles with area ratio 1:4
        let m = TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(10.0, 0.0, 0.0),
                Point3::new(12.0, 0.0, 0.0),
                Point3::new(10.0, 4.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let n = 100_000usize;
        let pc = sample_surface(&m, n, 13).unwrap();
        let on_big = pc.points.iter().filter(|p| p.x > 5.0).count();
        let p = 4.0 / 4.5;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let expected = n as f64 * p;
        assert!(
            ((on_big as f64) - expected).abs() < 3.0 * sigma,
            "count {on_big} vs expected {expected} (3 sigma = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn empty_mesh_errors() {
        let m = TriMesh {
            vertices: vec![],
            faces: vec![],
            normals: vec![],
        };
        assert!(sample_surface(&m, 10, 0).is_err());
    }
}
