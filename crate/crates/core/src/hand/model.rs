//! Hand model definition: palm box plus five three-segment capsule fingers,
//! 16 degrees of freedom total. The default model is embedded; alternative
//! geometries load from the same JSON schema.

use nalgebra::{Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{shapes, TriMesh};

use super::types::{JointLimits, JOINT_COUNT};
use super::HandError;

pub const FINGER_COUNT: usize = 5;
pub const SEGMENTS_PER_FINGER: usize = 3;
/// palm + 15 finger segments
pub const LINK_COUNT: usize = 1 + FINGER_COUNT * SEGMENTS_PER_FINGER;
/// Index of the thumb opposition angle inside the intrinsics vector.
pub const OPPOSITION_JOINT: usize = 15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FingerSpec {
    pub name: String,
    /// Base joint position in the palm frame (meters).
    pub base_pos: [f64; 3],
    /// Base orientation as roll-pitch-yaw (radians), applied as
    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`. Local +y is the segment direction,
    /// flexion rotates about local -x (positive angles curl palmar).
    pub base_rpy: [f64; 3],
    /// Segment lengths, proximal to distal (meters).
    pub lengths: [f64; 3],
    /// Capsule radius (meters).
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandModelSpec {
    pub palm_half_extents: [f64; 3],
    /// Thumb first, then index, middle, ring, pinky.
    pub fingers: Vec<FingerSpec>,
    pub flexion_limits: [f64; 2],
    pub opposition_limits: [f64; 2],
    /// Radius of the palm's self-collision sphere.
    pub palm_sphere_radius: f64,
}

/// A loaded hand model with its canonical rest-frame link meshes.
#[derive(Debug, Clone)]
pub struct HandModel {
    pub spec: HandModelSpec,
    pub limits: JointLimits,
    /// Base frame of each finger in the palm frame.
    pub finger_bases: Vec<(Rotation3<f64>, Vector3<f64>)>,
    /// Local vertices/normals of every link, in link frame. Index 0 is the
    /// palm; link `1 + 3f + s` is segment `s` of finger `f`.
    pub link_vertices: Vec<Vec<Point3<f64>>>,
    pub link_normals: Vec<Vec<Vector3<f64>>>,
    /// Faces over the global vertex numbering (palm first, then segments in
    /// link order); constant across poses.
    pub faces: Vec<[usize; 3]>,
    /// Link id per global vertex.
    pub vertex_links: Vec<u8>,
    /// First global vertex of each link.
    pub link_offsets: Vec<usize>,
    /// Self-collision sphere radius per link.
    pub link_sphere_radii: Vec<f64>,
}

impl HandModel {
    /// The default 16-DoF hand (~0.19 m long, 416 vertices).
    pub fn builtin() -> HandModel {
        static SRC: &str = include_str!("../../assets/hand_default.json");
        Self::from_json(SRC).expect("builtin hand model is valid")
    }

    pub fn load_json_file(path: &std::path::Path) -> Result<HandModel, HandError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HandError::Model(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<HandModel, HandError> {
        let spec: HandModelSpec =
            serde_json::from_str(text).map_err(|e| HandError::Model(e.to_string()))?;
        Self::build(spec)
    }

    pub fn build(spec: HandModelSpec) -> Result<HandModel, HandError> {
        if spec.fingers.len() != FINGER_COUNT {
            return Err(HandError::Model(format!(
                "expected {FINGER_COUNT} fingers, got {}",
                spec.fingers.len()
            )));
        }
        let mut lower = [0.0; JOINT_COUNT];
        let mut upper = [0.0; JOINT_COUNT];
        for j in 0..15 {
            lower[j] = spec.flexion_limits[0];
            upper[j] = spec.flexion_limits[1];
        }
        lower[OPPOSITION_JOINT] = spec.opposition_limits[0];
        upper[OPPOSITION_JOINT] = spec.opposition_limits[1];
        let limits = JointLimits::new(lower, upper)?;

        let finger_bases: Vec<(Rotation3<f64>, Vector3<f64>)> = spec
            .fingers
            .iter()
            .map(|f| {
                let rot = Rotation3::from_euler_angles(f.base_rpy[0], f.base_rpy[1], f.base_rpy[2]);
                (rot, Vector3::from_row_slice(&f.base_pos))
            })
            .collect();

        let mut link_vertices = Vec::with_capacity(LINK_COUNT);
        let mut link_normals = Vec::with_capacity(LINK_COUNT);
        let mut faces = Vec::new();
        let mut vertex_links = Vec::new();
        let mut link_offsets = Vec::with_capacity(LINK_COUNT);
        let mut link_sphere_radii = Vec::with_capacity(LINK_COUNT);

        let mut add_link = |mesh: &TriMesh,
                            link: usize,
                            sphere_r: f64,
                            link_vertices: &mut Vec<Vec<Point3<f64>>>,
                            link_normals: &mut Vec<Vec<Vector3<f64>>>| {
            let base = vertex_links.len();
            link_offsets.push(base);
            link_sphere_radii.push(sphere_r);
            vertex_links.extend(std::iter::repeat(link as u8).take(mesh.vertices.len()));
            faces.extend(mesh.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
            link_vertices.push(mesh.vertices.clone());
            link_normals.push(mesh.normals.clone());
        };

        let palm = shapes::box_mesh(&Vector3::from_row_slice(&spec.palm_half_extents), 2);
        add_link(&palm, 0, spec.palm_sphere_radius, &mut link_vertices, &mut link_normals);

        for (fi, f) in spec.fingers.iter().enumerate() {
            for s in 0..SEGMENTS_PER_FINGER {
                let seg = segment_mesh(f.lengths[s], f.radius);
                let link = 1 + fi * SEGMENTS_PER_FINGER + s;
                add_link(&seg, link, f.radius, &mut link_vertices, &mut link_normals);
            }
        }

        Ok(HandModel {
            spec,
            limits,
            finger_bases,
            link_vertices,
            link_normals,
            faces,
            vertex_links,
            link_offsets,
            link_sphere_radii,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_links.len()
    }

    /// Global vertex range `[start, end)` of a link.
    pub fn link_range(&self, link: usize) -> (usize, usize) {
        let start = self.link_offsets[link];
        let end = if link + 1 < self.link_offsets.len() {
            self.link_offsets[link + 1]
        } else {
            self.vertex_count()
        };
        (start, end)
    }

    /// Link ids of the distal (fingertip) segments.
    pub fn fingertip_links(&self) -> [usize; FINGER_COUNT] {
        let mut out = [0; FINGER_COUNT];
        for (f, slot) in out.iter_mut().enumerate() {
            *slot = 1 + f * SEGMENTS_PER_FINGER + (SEGMENTS_PER_FINGER - 1);
        }
        out
    }

    /// Whether two links are adjacent in the kinematic tree (or identical):
    /// consecutive segments of one finger, or palm and a proximal segment.
    pub fn links_adjacent(&self, a: usize, b: usize) -> bool {
        if a == b {
            return true;
        }
        let (a, b) = (a.min(b), a.max(b));
        if a == 0 {
            // palm adjacent to every proximal segment
            return (b - 1) % SEGMENTS_PER_FINGER == 0;
        }
        let fa = (a - 1) / SEGMENTS_PER_FINGER;
        let fb = (b - 1) / SEGMENTS_PER_FINGER;
        fa == fb && b == a + 1
    }
}

/// Low-poly capsule-style segment: octagonal rings at y = 0, L/2, L plus
/// base/tip apexes. The tip apex extends past the last ring like a capsule
/// cap so fingertip contact geometry is rounded.
fn segment_mesh(length: f64, radius: f64) -> TriMesh {
    let m = 8usize;
    let mut verts = Vec::with_capacity(3 * m + 2);
    for &y in &[0.0, length * 0.5, length] {
        for i in 0..m {
            let t = 2.0 * std::f64::consts::PI * (i as f64) / (m as f64);
            verts.push(Point3::new(radius * t.cos(), y, radius * t.sin()));
        }
    }
    let base_apex = verts.len();
    verts.push(Point3::new(0.0, -0.4 * radius, 0.0));
    let tip_apex = verts.len();
    verts.push(Point3::new(0.0, length + 0.9 * radius, 0.0));
    let mut faces = Vec::new();
    for ring in 0..2 {
        for i in 0..m {
            let j = (i + 1) % m;
            let (a, b) = (ring * m, (ring + 1) * m);
            faces.push([a + i, b + j, a + j]);
            faces.push([a + i, b + i, b + j]);
        }
    }
    for i in 0..m {
        let j = (i + 1) % m;
        faces.push([base_apex, i, j]);
        faces.push([tip_apex, 2 * m + j, 2 * m + i]);
    }
    let mut mesh = TriMesh::new(verts, faces).expect("segment mesh is valid");
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
    fn builtin_model_loads() {
        let m = HandModel::builtin();
        assert_eq!(m.link_vertices.len(), LINK_COUNT);
        let n = m.vertex_count();
        assert!((350..500).contains(&n), "vertex count {n}");
    }

    #[test]
    fn adjacency_rules() {
        let m = HandModel::builtin();
        assert!(m.links_adjacent(0, 1)); // palm - thumb proximal
        assert!(m.links_adjacent(0, 4)); // palm - index proximal
        assert!(!m.links_adjacent(0, 2)); // palm - thumb middle
        assert!(m.links_adjacent(4, 5)); // index proximal - middle
        assert!(!m.links_adjacent(3, 4)); // thumb distal - index proximal
        assert!(!m.links_adjacent(5, 8));
    }

    #[test]
    fn segment_meshes_are_watertight() {
        let seg = segment_mesh(0.04, 0.008);
        assert!(seg.is_watertight());
        assert!(seg.volume() > 0.0);
    }

    #[test]
    fn fingertip_links_are_distal() {
        let m = HandModel::builtin();
        assert_eq!(m.fingertip_links(), [3, 6, 9, 12, 15]);
    }
}
