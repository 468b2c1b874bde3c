//! Differentiable forward kinematics.
//!
//! Link frames are composed in the palm frame first and the global
//! transform is applied last, so posing with extrinsics `(T, R)` is exactly
//! the rigid motion of the `(0, I, theta)` mesh. The rotation is
//! differentiated as a left-applied axis-angle increment at the current
//! rotation, which avoids quaternion-normalization gradient pitfalls.
//!
//! Parameter layout everywhere: `[T(3), r_inc(3), theta(16)]`, 22 total.

use nalgebra::{Point3, Rotation3, Vector3};

use crate::geom::TriMesh;

use super::model::{HandModel, OPPOSITION_JOINT, SEGMENTS_PER_FINGER};
use super::types::{HandPose, JOINT_COUNT};

pub const PARAM_COUNT: usize = 6 + JOINT_COUNT;

/// Posed hand surface. Vertex ids and link assignment are stable across
/// poses for a given model.
#[derive(Debug, Clone)]
pub struct HandMesh {
    pub vertices: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub link_ids: Vec<u8>,
}

impl HandMesh {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Indexed triangle mesh using the model's constant face table.
    pub fn to_tri_mesh(&self, model: &HandModel) -> TriMesh {
        TriMesh::with_normals(
            self.vertices.clone(),
            model.faces.clone(),
            Some(self.normals.clone()),
        )
        .expect("hand mesh is consistent with its model")
    }
}

/// FK output plus everything needed for analytic derivatives.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub mesh: HandMesh,
    /// World rotation/origin of every link frame.
    pub link_rots: Vec<Rotation3<f64>>,
    pub link_origins: Vec<Vector3<f64>>,
    /// World (axis, point-on-axis) of each of the 16 joints.
    pub joint_axes: [(Vector3<f64>, Point3<f64>); JOINT_COUNT],
    pub translation: Vector3<f64>,
}

/// True when joint `j` moves link `link`.
pub fn joint_affects_link(j: usize, link: u8) -> bool {
    if link == 0 {
        return false;
    }
    let seg_index = (link - 1) as usize;
    if j == OPPOSITION_JOINT {
        return seg_index < SEGMENTS_PER_FINGER; // whole thumb
    }
    let (jf, js) = (j / SEGMENTS_PER_FINGER, j % SEGMENTS_PER_FINGER);
    let (lf, ls) = (
        seg_index / SEGMENTS_PER_FINGER,
        seg_index % SEGMENTS_PER_FINGER,
    );
    jf == lf && ls >= js
}

/// Poses the hand. Angles beyond the joint limits still produce a mesh;
/// limits are penalized downstream, never clamped here.
pub fn forward_kinematics(model: &HandModel, pose: &HandPose) -> FkResult {
    // link frames in the palm frame
    let mut rots_p = vec![Rotation3::identity(); model.link_vertices.len()];
    let mut origins_p = vec![Vector3::zeros(); model.link_vertices.len()];
    let mut joints_p = [(Vector3::zeros(), Point3::origin()); JOINT_COUNT];

    let hinge = Vector3::new(-1.0, 0.0, 0.0);
    for (f, fspec) in model.spec.fingers.iter().enumerate() {
        let (mut rot, pos) = model.finger_bases[f];
        if f == 0 {
            // thumb opposition: rotation about the palm z axis through the base
            let opp = pose.intrinsics.theta[OPPOSITION_JOINT];
            let r_opp = Rotation3::from_axis_angle(&Vector3::z_axis(), opp);
            rot = r_opp * rot;
            joints_p[OPPOSITION_JOINT] = (Vector3::z(), Point3::from(pos));
        }
        let mut cur_rot = rot;
        let mut cur_pos = pos;
        for s in 0..SEGMENTS_PER_FINGER {
            let j = f * SEGMENTS_PER_FINGER + s;
            let axis_world = cur_rot * hinge;
            joints_p[j] = (axis_world, Point3::from(cur_pos));
            let theta = pose.intrinsics.theta[j];
            cur_rot *= Rotation3::from_scaled_axis(hinge * theta);
            let link = 1 + f * SEGMENTS_PER_FINGER + s;
            rots_p[link] = cur_rot;
            origins_p[link] = cur_pos;
            cur_pos += cur_rot * Vector3::new(0.0, fspec.lengths[s], 0.0);
        }
    }

    // palm-frame vertices, then the global transform applied last
    let r_ext = *pose.extrinsics.rotation();
    let t_ext = pose.extrinsics.translation;
    let n = model.vertex_count();
    let mut vertices = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for link in 0..model.link_vertices.len() {
        let (rp, tp) = (rots_p[link], origins_p[link]);
        for v in &model.link_vertices[link] {
            let palm_frame = rp * v + tp;
            vertices.push(r_ext * palm_frame + t_ext);
        }
        for nm in &model.link_normals[link] {
            normals.push(r_ext * (rp * nm));
        }
    }

    let mut joint_axes = [(Vector3::zeros(), Point3::origin()); JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        let (u, p) = joints_p[j];
        joint_axes[j] = (r_ext * u, Point3::from(r_ext * p.coords + t_ext));
    }
    let link_rots = rots_p.iter().map(|r| r_ext * r).collect();
    let link_origins = origins_p
        .iter()
        .map(|t| r_ext * t + t_ext)
        .collect();

    FkResult {
        mesh: HandMesh {
            vertices,
            normals,
            link_ids: model.vertex_links.clone(),
        },
        link_rots,
        link_origins,
        joint_axes,
        translation: t_ext,
    }
}

impl FkResult {
    /// Analytic `d position_i / d params` as a 3x22 row-major block.
    pub fn position_jacobian(&self, i: usize) -> [[f64; PARAM_COUNT]; 3] {
        let mut out = [[0.0; PARAM_COUNT]; 3];
        let w = self.mesh.vertices[i];
        let link = self.mesh.link_ids[i];
        // d/dT = I
        for k in 0..3 {
            out[k][k] = 1.0;
        }
        // d/dr_inc = [e_k x (w - T)]
        let r = w.coords - self.translation;
        for k in 0..3 {
            let col = basis(k).cross(&r);
            for row in 0..3 {
                out[row][3 + k] = col[row];
            }
        }
        for j in 0..JOINT_COUNT {
            if !joint_affects_link(j, link) {
                continue;
            }
            let (u, p) = self.joint_axes[j];
            let col = u.cross(&(w - p));
            for row in 0..3 {
                out[row][6 + j] = col[row];
            }
        }
        out
    }

    /// Analytic `d normal_i / d params` (zero for translation).
    pub fn normal_jacobian(&self, i: usize) -> [[f64; PARAM_COUNT]; 3] {
        let mut out = [[0.0; PARAM_COUNT]; 3];
        let n = self.mesh.normals[i];
        let link = self.mesh.link_ids[i];
        for k in 0..3 {
            let col = basis(k).cross(&n);
            for row in 0..3 {
                out[row][3 + k] = col[row];
            }
        }
        for j in 0..JOINT_COUNT {
            if !joint_affects_link(j, link) {
                continue;
            }
            let (u, _) = self.joint_axes[j];
            let col = u.cross(&n);
            for row in 0..3 {
                out[row][6 + j] = col[row];
            }
        }
        out
    }

    /// Vector-Jacobian product: cotangents for vertex positions (and
    /// optionally normals), both flattened `(n, 3)` row-major, down to the
    /// 22 pose parameters.
    pub fn vjp(&self, d_pos: &[f64], d_norm: Option<&[f64]>) -> [f64; PARAM_COUNT] {
        let n = self.mesh.vertices.len();
        debug_assert_eq!(d_pos.len(), 3 * n);
        let mut g = [0.0; PARAM_COUNT];
        for i in 0..n {
            let link = self.mesh.link_ids[i];
            let dw = Vector3::new(d_pos[3 * i], d_pos[3 * i + 1], d_pos[3 * i + 2]);
            let w = self.mesh.vertices[i];
            g[0] += dw.x;
            g[1] += dw.y;
            g[2] += dw.z;
            // dw . (e_k x r) = e_k . (r x dw)
            let r = w.coords - self.translation;
            let rx = r.cross(&dw);
            g[3] += rx.x;
            g[4] += rx.y;
            g[5] += rx.z;
            for j in 0..JOINT_COUNT {
                if joint_affects_link(j, link) {
                    let (u, p) = self.joint_axes[j];
                    g[6 + j] += u.dot(&(w - p).cross(&dw));
                }
            }
            if let Some(dn_all) = d_norm {
                let dn = Vector3::new(dn_all[3 * i], dn_all[3 * i + 1], dn_all[3 * i + 2]);
                if dn != Vector3::zeros() {
                    let nv = self.mesh.normals[i];
                    let nx = nv.cross(&dn);
                    g[3] += nx.x;
                    g[4] += nx.y;
                    g[5] += nx.z;
                    for j in 0..JOINT_COUNT {
                        if joint_affects_link(j, link) {
                            let (u, _) = self.joint_axes[j];
                            g[6 + j] += u.dot(&nv.cross(&dn));
                        }
                    }
                }
            }
        }
        g
    }

    /// Collision proxy: one capsule per finger segment plus the palm box.
    pub fn collider(&self, model: &HandModel) -> HandCollider {
        let mut capsules = Vec::with_capacity(model.spec.fingers.len() * SEGMENTS_PER_FINGER);
        for (f, fspec) in model.spec.fingers.iter().enumerate() {
            for s in 0..SEGMENTS_PER_FINGER {
                let link = 1 + f * SEGMENTS_PER_FINGER + s;
                let p0 = Point3::from(self.link_origins[link]);
                let p1 = Point3::from(
                    self.link_origins[link]
                        + self.link_rots[link] * Vector3::new(0.0, fspec.lengths[s], 0.0),
                );
                capsules.push((p0, p1, fspec.radius));
            }
        }
        HandCollider {
            capsules,
            palm_rot: self.link_rots[0],
            palm_pos: self.link_origins[0],
            palm_half: Vector3::from_row_slice(&model.spec.palm_half_extents),
        }
    }
}

fn basis(k: usize) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    v[k] = 1.0;
    v
}

/// Smooth signed-distance collider for the posed hand (capsules + palm box).
#[derive(Debug, Clone)]
pub struct HandCollider {
    pub capsules: Vec<(Point3<f64>, Point3<f64>, f64)>,
    pub palm_rot: Rotation3<f64>,
    pub palm_pos: Vector3<f64>,
    pub palm_half: Vector3<f64>,
}

impl HandCollider {
    /// Signed distance from `p` to the hand surface (negative inside).
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let mut d = f64::INFINITY;
        for (a, b, r) in &self.capsules {
            d = d.min(segment_distance(p, a, b) - r);
        }
        let local = self.palm_rot.inverse() * (p - self.palm_pos);
        let q = Vector3::new(
            local.x.abs() - self.palm_half.x,
            local.y.abs() - self.palm_half.y,
            local.z.abs() - self.palm_half.z,
        );
        let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
        let box_d = outside.norm() + q.x.max(q.y).max(q.z).min(0.0);
        d.min(box_d)
    }

    /// Outward gradient of the distance field (central differences; the
    /// field is piecewise smooth and this is only used by the simulator).
    pub fn gradient(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 1e-6;
        let mut g = Vector3::zeros();
        for k in 0..3 {
            let mut pp = *p;
            let mut pm = *p;
            pp[k] += h;
            pm[k] -= h;
            g[k] = (self.distance(&pp) - self.distance(&pm)) / (2.0 * h);
        }
        let n = g.norm();
        if n > 1e-12 {
            g / n
        } else {
            Vector3::z()
        }
    }
}

fn segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}
