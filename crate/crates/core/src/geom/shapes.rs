//! Procedural solid primitives: watertight meshes plus signed distance
//! functions for the same solids, so generated objects can be meshed,
//! sampled, and queried consistently.

use nalgebra::{Point3, Rotation3, Vector3};

use super::TriMesh;

/// A solid primitive in its canonical local frame.
#[derive(Debug, Clone)]
pub enum Shape {
    /// Axis-aligned box with the given half extents.
    Box { half: Vector3<f64> },
    /// Cylinder of radius `r` spanning `z in [-hz, hz]`.
    Cylinder { r: f64, hz: f64 },
    /// Sphere of radius `r` at the origin.
    Sphere { r: f64 },
    /// Tube of minor radius `r` following the circular arc of radius
    /// `major` in the local x-z plane, from angle `t0` to `t1` (radians,
    /// span at most pi).
    TubeArc { major: f64, r: f64, t0: f64, t1: f64 },
}

impl Shape {
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        match *self {
            Shape::Box { half } => {
                let q = Vector3::new(
                    p.x.abs() - half.x,
                    p.y.abs() - half.y,
                    p.z.abs() - half.z,
                );
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
                outside.norm() + q.x.max(q.y).max(q.z).min(0.0)
            }
            Shape::Cylinder { r, hz } => {
                let dr = (p.x * p.x + p.y * p.y).sqrt() - r;
                let dz = p.z.abs() - hz;
                let ox = dr.max(0.0);
                let oz = dz.max(0.0);
                (ox * ox + oz * oz).sqrt() + dr.max(dz).min(0.0)
            }
            Shape::Sphere { r } => p.coords.norm() - r,
            Shape::TubeArc { major, r, t0, t1 } => {
                (p - self.arc_closest_point(p, major, t0, t1)).norm() - r
            }
        }
    }

    fn arc_closest_point(&self, p: &Point3<f64>, major: f64, t0: f64, t1: f64) -> Point3<f64> {
        let ang = f64::atan2(p.z, p.x);
        let clamped = clamp_angle(ang, t0, t1);
        Point3::new(major * clamped.cos(), 0.0, major * clamped.sin())
    }

    pub fn mesh(&self) -> TriMesh {
        match *self {
            Shape::Box { half } => box_mesh(&half, 2),
            Shape::Cylinder { r, hz } => cylinder_mesh(r, hz, 24),
            Shape::Sphere { r } => sphere_mesh(r, 16, 10),
            Shape::TubeArc { major, r, t0, t1 } => tube_arc_mesh(major, r, t0, t1, 16, 10),
        }
    }
}

/// Picks the angle in `[t0, t1]` nearest to `ang` on the circle.
fn clamp_angle(ang: f64, t0: f64, t1: f64) -> f64 {
    use std::f64::consts::PI;
    if ang >= t0 && ang <= t1 {
        return ang;
    }
    // distances on the circle to the two endpoints
    let wrap = |d: f64| {
        let mut d = d % (2.0 * PI);
        if d > PI {
            d -= 2.0 * PI;
        }
        if d < -PI {
            d += 2.0 * PI;
        }
        d.abs()
    };
    if wrap(ang - t0) <= wrap(ang - t1) {
        t0
    } else {
        t1
    }
}

/// A primitive posed in world coordinates.
#[derive(Debug, Clone)]
pub struct PlacedShape {
    pub shape: Shape,
    pub rot: Rotation3<f64>,
    pub pos: Vector3<f64>,
}

impl PlacedShape {
    pub fn new(shape: Shape, rot: Rotation3<f64>, pos: Vector3<f64>) -> Self {
        Self { shape, rot, pos }
    }

    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        let local = self.rot.inverse() * (p - self.pos);
        self.shape.sdf(&Point3::from(local))
    }

    pub fn mesh(&self) -> TriMesh {
        let mut m = self.shape.mesh();
        m.transform(&self.rot, &self.pos);
        m
    }
}

/// Union of placed primitives; the solid an object is built from.
#[derive(Debug, Clone, Default)]
pub struct ShapeSet {
    pub shapes: Vec<PlacedShape>,
}

impl ShapeSet {
    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        self.shapes
            .iter()
            .map(|s| s.sdf(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the primitive nearest to `p`.
    pub fn nearest_shape(&self, p: &Point3<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, s) in self.shapes.iter().enumerate() {
            let d = s.sdf(p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn mesh(&self) -> TriMesh {
        let mut out = TriMesh {
            vertices: vec![],
            faces: vec![],
            normals: vec![],
        };
        for s in &self.shapes {
            out.merge(&s.mesh());
        }
        out
    }
}

fn push_quad(faces: &mut Vec<[usize; 3]>, a: usize, b: usize, c: usize, d: usize) {
    faces.push([a, b, c]);
    faces.push([a, c, d]);
}

/// Watertight box mesh with `n`-subdivided faces and welded seam vertices.
pub fn box_mesh(half: &Vector3<f64>, n: usize) -> TriMesh {
    let n = n.max(1);
    let mut idx = std::collections::HashMap::new();
    let mut verts: Vec<Point3<f64>> = Vec::new();
    let coord = |i: usize, h: f64| -h + 2.0 * h * (i as f64) / (n as f64);
    let mut id_of = |i: usize, j: usize, k: usize, verts: &mut Vec<Point3<f64>>| -> usize {
        *idx.entry((i, j, k)).or_insert_with(|| {
            verts.push(Point3::new(coord(i, half.x), coord(j, half.y), coord(k, half.z)));
            verts.len() - 1
        })
    };
    let mut faces = Vec::new();
    for a in 0..n {
        for b in 0..n {
            // +x / -x
            let q = [
                id_of(n, a, b, &mut verts),
                id_of(n, a + 1, b, &mut verts),
                id_of(n, a + 1, b + 1, &mut verts),
                id_of(n, a, b + 1, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
            let q = [
                id_of(0, a, b, &mut verts),
                id_of(0, a, b + 1, &mut verts),
                id_of(0, a + 1, b + 1, &mut verts),
                id_of(0, a + 1, b, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
            // +y / -y
            let q = [
                id_of(a, n, b, &mut verts),
                id_of(a, n, b + 1, &mut verts),
                id_of(a + 1, n, b + 1, &mut verts),
                id_of(a + 1, n, b, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
            let q = [
                id_of(a, 0, b, &mut verts),
                id_of(a + 1, 0, b, &mut verts),
                id_of(a + 1, 0, b + 1, &mut verts),
                id_of(a, 0, b + 1, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
            // +z / -z
            let q = [
                id_of(a, b, n, &mut verts),
                id_of(a + 1, b, n, &mut verts),
                id_of(a + 1, b + 1, n, &mut verts),
                id_of(a, b + 1, n, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
            let q = [
                id_of(a, b, 0, &mut verts),
                id_of(a, b + 1, 0, &mut verts),
                id_of(a + 1, b + 1, 0, &mut verts),
                id_of(a + 1, b, 0, &mut verts),
            ];
            push_quad(&mut faces, q[0], q[1], q[2], q[3]);
        }
    }
    TriMesh::new(verts, faces).expect("box mesh is valid")
}

/// Capped cylinder along z with `m` angular segments.
pub fn cylinder_mesh(r: f64, hz: f64, m: usize) -> TriMesh {
    let m = m.max(3);
    let mut verts = Vec::with_capacity(2 * m + 2);
    for &z in &[-hz, hz] {
        for i in 0..m {
            let t = 2.0 * std::f64::consts::PI * (i as f64) / (m as f64);
            verts.push(Point3::new(r * t.cos(), r * t.sin(), z));
        }
    }
    let bot_c = verts.len();
    verts.push(Point3::new(0.0, 0.0, -hz));
    let top_c = verts.len();
    verts.push(Point3::new(0.0, 0.0, hz));
    let mut faces = Vec::new();
    for i in 0..m {
        let j = (i + 1) % m;
        push_quad(&mut faces, i, j, m + j, m + i);
        faces.push([top_c, m + i, m + j]);
        faces.push([bot_c, j, i]);
    }
    TriMesh::new(verts, faces).expect("cylinder mesh is valid")
}

/// UV sphere with `m` segments and `rings` latitude bands.
pub fn sphere_mesh(r: f64, m: usize, rings: usize) -> TriMesh {
    let m = m.max(3);
    let rings = rings.max(2);
    let mut verts = vec![Point3::new(0.0, 0.0, -r)];
    for k in 1..rings {
        let phi = std::f64::consts::PI * (k as f64) / (rings as f64) - std::f64::consts::FRAC_PI_2;
        for i in 0..m {
            let t = 2.0 * std::f64::consts::PI * (i as f64) / (m as f64);
            verts.push(Point3::new(
                r * phi.cos() * t.cos(),
                r * phi.cos() * t.sin(),
                r * phi.sin(),
            ));
        }
    }
    let north = verts.len();
    verts.push(Point3::new(0.0, 0.0, r));
    let ring = |k: usize, i: usize| 1 + (k - 1) * m + (i % m);
    let mut faces = Vec::new();
    for i in 0..m {
        faces.push([0, ring(1, i + 1), ring(1, i)]);
        faces.push([north, ring(rings - 1, i), ring(rings - 1, i + 1)]);
    }
    for k in 1..rings - 1 {
        for i in 0..m {
            push_quad(
                &mut faces,
                ring(k, i),
                ring(k, i + 1),
                ring(k + 1, i + 1),
                ring(k + 1, i),
            );
        }
    }
    TriMesh::new(verts, faces).expect("sphere mesh is valid")
}

/// Capped tube following an arc in the x-z plane.
pub fn tube_arc_mesh(major: f64, r: f64, t0: f64, t1: f64, n_arc: usize, m: usize) -> TriMesh {
    let n_arc = n_arc.max(2);
    let m = m.max(3);
    let mut verts = Vec::new();
    for s in 0..=n_arc {
        let t = t0 + (t1 - t0) * (s as f64) / (n_arc as f64);
        let center = Vector3::new(major * t.cos(), 0.0, major * t.sin());
        let radial = Vector3::new(t.cos(), 0.0, t.sin());
        let binorm = Vector3::new(0.0, 1.0, 0.0);
        for i in 0..m {
            let phi = 2.0 * std::f64::consts::PI * (i as f64) / (m as f64);
            let p = center + r * (phi.cos() * radial + phi.sin() * binorm);
            verts.push(Point3::from(p));
        }
    }
    let c0 = verts.len();
    verts.push(Point3::new(major * t0.cos(), 0.0, major * t0.sin()));
    let c1 = verts.len();
    verts.push(Point3::new(major * t1.cos(), 0.0, major * t1.sin()));
    let mut faces = Vec::new();
    for s in 0..n_arc {
        for i in 0..m {
            let j = (i + 1) % m;
            push_quad(
                &mut faces,
                s * m + i,
                s * m + j,
                (s + 1) * m + j,
                (s + 1) * m + i,
            );
        }
    }
    for i in 0..m {
        let j = (i + 1) % m;
        faces.push([c0, j, i]);
        faces.push([c1, n_arc * m + i, n_arc * m + j]);
    }
    let mut mesh = TriMesh::new(verts, faces).expect("tube mesh is valid");
    // orientation depends on arc direction; flip if it came out inside-out
    if mesh.volume() < 0.0 {
        for f in &mut mesh.faces {
            f.swap(1, 2);
        }
        for n in &mut mesh.normals {
            *n = -*n;
        }
    }
    mesh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_meshes_are_watertight_with_positive_volume() {
        let shapes = [
            Shape::Box {
                half: Vector3::new(0.03, 0.04, 0.05),
            },
            Shape::Cylinder { r: 0.03, hz: 0.05 },
            Shape::Sphere { r: 0.04 },
            Shape::TubeArc {
                major: 0.05,
                r: 0.01,
                t0: 0.3,
                t1: 2.5,
            },
        ];
        for s in shapes {
            let m = s.mesh();
            assert!(m.is_watertight(), "{s:?} not watertight");
            assert!(m.volume() > 0.0, "{s:?} inverted volume {}", m.volume());
        }
    }

    #[test]
    fn cylinder_volume_approximates_analytic() {
        let m = cylinder_mesh(0.05, 0.1, 64);
        let analytic = std::f64::consts::PI * 0.05 * 0.05 * 0.2;
        assert!((m.volume() - analytic).abs() / analytic < 0.01);
    }

    #[test]
    fn sdf_matches_mesh_classification() {
        let s = Shape::Cylinder { r: 0.04, hz: 0.06 };
        let m = s.mesh();
        for p in [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.05, 0.0, 0.0),
            Point3::new(0.0, 0.03, 0.05),
            Point3::new(0.0, 0.0, 0.08),
        ] {
            assert_eq!(s.sdf(&p) < 0.0, m.contains(&p), "disagree at {p:?}");
        }
    }

    #[test]
    fn placed_shape_sdf_is_rigid_motion_of_local() {
        let s = Shape::Box {
            half: Vector3::new(0.02, 0.03, 0.04),
        };
        let rot = Rotation3::from_euler_angles(0.3, -0.4, 0.9);
        let pos = Vector3::new(0.1, -0.2, 0.05);
        let placed = PlacedShape::new(s.clone(), rot, pos);
        let p_local = Point3::new(0.015, -0.01, 0.02);
        let p_world = rot * p_local + pos;
        assert!((placed.sdf(&p_world) - s.sdf(&p_local)).abs() < 1e-12);
    }
}
