//! Triangle meshes with Wavefront OBJ I/O and the exact point queries the
//! loss terms and metrics are built on.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::GeomError;

/// An indexed triangle mesh with per-vertex normals.
///
/// Load-time cleanup drops zero-area faces and renormalizes normals;
/// procedural and downloaded meshes are dirty.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Vec<Vector3<f64>>,
}

const DEGENERATE_AREA: f64 = 1e-14;

impl TriMesh {
    /// Builds a mesh from raw arrays, computing area-weighted vertex normals
    /// and dropping degenerate faces.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        Self::with_normals(vertices, faces, None)
    }

    /// As [`TriMesh::new`] but keeps the caller's vertex normals when given.
    pub fn with_normals(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[usize; 3]>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self, GeomError> {
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= vertices.len()) {
                return Err(GeomError::InvalidInput(format!(
                    "face {i} references vertex out of range"
                )));
            }
        }
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| {
                let a = vertices[f[0]];
                let b = vertices[f[1]];
                let c = vertices[f[2]];
                (b - a).cross(&(c - a)).norm() * 0.5 > DEGENERATE_AREA
            })
            .collect();
        let normals = match normals {
            Some(mut ns) => {
                if ns.len() != vertices.len() {
                    return Err(GeomError::InvalidInput(
                        "normal count must match vertex count".into(),
                    ));
                }
                for n in ns.iter_mut() {
                    let len = n.norm();
                    if len <= 1e-12 {
                        *n = Vector3::z();
                    } else if (len - 1.0).abs() > 1e-9 {
                        *n /= len;
                    }
                }
                ns
            }
            None => vertex_normals(&vertices, &faces),
        };
        Ok(Self {
            vertices,
            faces,
            normals,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.faces[f];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len > 1e-12 {
            n / len
        } else {
            Vector3::z()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        (self.vertices[b] - self.vertices[a])
            .cross(&(self.vertices[c] - self.vertices[a]))
            .norm()
            * 0.5
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed volume via the divergence theorem. Positive for outward-oriented
    /// closed meshes.
    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a]
                    .coords
                    .dot(&self.vertices[b].coords.cross(&self.vertices[c].coords))
                    / 6.0
            })
            .sum()
    }

    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// True when every directed edge appears exactly once (closed, oriented
    /// 2-manifold). Multi-shell meshes pass as long as each shell is closed.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                *directed.entry(e).or_insert(0) += 1;
            }
        }
        directed.iter().all(|(&(a, b), &cnt)| {
            cnt == 1 && directed.get(&(b, a)).copied().unwrap_or(0) == 1
        })
    }

    /// Generalized winding number of `p` with respect to the mesh surface.
    ///
    /// ~1 inside a single closed shell, ~0 outside, ~2 inside two nested or
    /// overlapping shells. Use `winding_number(p).abs() > 0.5` as an inside
    /// test that stays correct for multi-component objects.
    pub fn winding_number(&self, p: &Point3<f64>) -> f64 {
        let mut total = 0.0;
        for &[ia, ib, ic] in &self.faces {
            let a = self.vertices[ia] - p;
            let b = self.vertices[ib] - p;
            let c = self.vertices[ic] - p;
            let la = a.norm();
            let lb = b.norm();
            let lc = c.norm();
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += f64::atan2(num, den);
        }
        total / (2.0 * std::f64::consts::PI)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.winding_number(p).abs() > 0.5
    }

    /// Unsigned distance from `p` to the mesh surface (exact scan over faces).
    pub fn surface_distance(&self, p: &Point3<f64>) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                point_triangle_distance(p, &self.vertices[a], &self.vertices[b], &self.vertices[c])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Rigidly transforms the mesh in place.
    pub fn transform(&mut self, rot: &nalgebra::Rotation3<f64>, t: &Vector3<f64>) {
        for v in &mut self.vertices {
            *v = rot * *v + t;
        }
        for n in &mut self.normals {
            *n = rot * *n;
        }
    }

    /// Concatenates another mesh into this one.
    pub fn merge(&mut self, other: &TriMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.normals.extend_from_slice(&other.normals);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
    }

    /// Reads a Wavefront OBJ file (ASCII `v`/`vn`/`f` records). Polygonal
    /// faces are fan-triangulated; missing normals are computed from faces.
    pub fn load_obj(path: &Path) -> Result<Self, GeomError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GeomError::MeshLoad(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse_obj(&text).map_err(|e| {
            GeomError::MeshLoad(format!("{}: {e}", path.display()))
        })
    }

    pub fn parse_obj(text: &str) -> Result<Self, String> {
        let mut vertices: Vec<Point3<f64>> = Vec::new();
        let mut vns: Vec<Vector3<f64>> = Vec::new();
        let mut faces: Vec<[usize; 3]> = Vec::new();
        // vertex index -> normal index, from f records like 3//7
        let mut vn_of_v: HashMap<usize, usize> = HashMap::new();

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let mut c = [0.0f64; 3];
                    for slot in &mut c {
                        *slot = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| format!("bad v record at line {}", lineno + 1))?;
                    }
                    vertices.push(Point3::new(c[0], c[1], c[2]));
                }
                Some("vn") => {
                    let mut c = [0.0f64; 3];
                    for slot in &mut c {
                        *slot = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| format!("bad vn record at line {}", lineno + 1))?;
                    }
                    vns.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let mut idx: Vec<usize> = Vec::new();
                    for tok in it {
                        let mut parts = tok.split('/');
                        let vi: i64 = parts
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| format!("bad f record at line {}", lineno + 1))?;
                        if vi < 1 || vi as usize > vertices.len() {
                            return Err(format!("face index out of range at line {}", lineno + 1));
                        }
                        let v = vi as usize - 1;
                        // skip texture slot, read optional normal slot
                        let _vt = parts.next();
                        if let Some(Ok(ni)) = parts.next().map(|s| s.parse::<usize>()) {
                            if ni >= 1 {
                                vn_of_v.insert(v, ni - 1);
                            }
                        }
                        idx.push(v);
                    }
                    if idx.len() < 3 {
                        return Err(format!("face with <3 vertices at line {}", lineno + 1));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        if vertices.is_empty() {
            return Err("no vertices".into());
        }
        let normals = if !vns.is_empty() && vn_of_v.len() == vertices.len() {
            let mut ns = vec![Vector3::z(); vertices.len()];
            for (&v, &n) in &vn_of_v {
                if n < vns.len() {
                    ns[v] = vns[n];
                }
            }
            Some(ns)
        } else {
            None
        };
        Self::with_normals(vertices, faces, normals).map_err(|e| e.to_string())
    }

    /// Writes the mesh as ASCII OBJ with `v`, `vn` and `f v//vn` records.
    pub fn save_obj(&self, path: &Path) -> Result<(), GeomError> {
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for n in &self.normals {
            writeln!(out, "vn {} {} {}", n.x, n.y, n.z).unwrap();
        }
        for f in &self.faces {
            writeln!(
                out,
                "f {}//{} {}//{} {}//{}",
                f[0] + 1,
                f[0] + 1,
                f[1] + 1,
                f[1] + 1,
                f[2] + 1,
                f[2] + 1
            )
            .unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn vertex_normals(vertices: &[Point3<f64>], faces: &[[usize; 3]]) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for &[a, b, c] in faces {
        // cross product length is 2x area, so this is area weighting
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 1e-12 {
                n / len
            } else {
                Vector3::z()
            }
        })
        .collect()
}

/// Closest distance between a point and a triangle (Ericson, Real-Time
/// Collision Detection, 5.1.5).
pub fn point_triangle_distance(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    #[test]
    fn unit_cube_volume_and_watertight() {
        let cube = shapes::box_mesh(&Vector3::new(0.5, 0.5, 0.5), 1);
        assert!(cube.is_watertight());
        assert!((cube.volume() - 1.0).abs() < 1e-12);
        assert!((cube.total_area() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn winding_number_inside_outside() {
        let cube = shapes::box_mesh(&Vector3::new(0.5, 0.5, 0.5), 1);
        assert!(cube.contains(&Point3::origin()));
        assert!(!cube.contains(&Point3::new(0.9, 0.0, 0.0)));
    }

    #[test]
    fn drops_degenerate_faces() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let faces = vec![[0, 1, 2], [0, 1, 1]];
        let m = TriMesh::new(verts, faces).unwrap();
        assert_eq!(m.faces.len(), 1);
    }

    #[test]
    fn rejects_out_of_range_face() {
        let verts = vec![Point3::origin()];
        assert!(TriMesh::new(verts, vec![[0, 0, 7]]).is_err());
    }

    #[test]
    fn obj_round_trip_is_lossless() {
        let cube = shapes::box_mesh(&Vector3::new(0.4, 0.3, 0.25), 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        cube.save_obj(&path).unwrap();
        let back = TriMesh::load_obj(&path).unwrap();
        assert_eq!(cube.vertices, back.vertices);
        assert_eq!(cube.faces, back.faces);
        assert_eq!(cube.normals, back.normals);
    }

    #[test]
    fn point_triangle_distance_cases() {
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(1.0, 0.0, 0.0);
        let c = Point3::new(0.0, 1.0, 0.0);
        // above interior
        let d = point_triangle_distance(&Point3::new(0.2, 0.2, 0.5), &a, &b, &c);
        assert!((d - 0.5).abs() < 1e-12);
        // nearest to vertex b
        let d = point_triangle_distance(&Point3::new(2.0, 0.0, 0.0), &a, &b, &c);
        assert!((d - 1.0).abs() < 1e-12);
        // nearest to edge ab
        let d = point_triangle_distance(&Point3::new(0.5, -1.0, 0.0), &a, &b, &c);
        assert!((d - 1.0).abs() < 1e-12);
    }
}
