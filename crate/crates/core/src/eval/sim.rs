//! Miniature rigid-body simulation for grasp stability: the hand is a
//! fixed collider, the object a free rigid body under gravity, and contact
//! is a penalty spring-damper on penetrating surface sample points.

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};

use crate::geom::TriMesh;
use crate::hand::HandCollider;

use super::EvalError;

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Integration step (seconds); semi-implicit Euler.
    pub dt: f64,
    pub duration: f64,
    pub gravity: f64,
    /// Total contact stiffness (N/m), split across active contacts so the
    /// resting frequency stays resolvable at the fixed step.
    pub stiffness: f64,
    /// Damping ratio; 1 = critical for the total spring-mass pair.
    pub damping_ratio: f64,
    /// Uniform density used to derive mass and inertia (kg/m^3).
    pub density: f64,
    /// Coulomb friction coefficient capping the tangential contact force.
    pub friction: f64,
    /// Speed above which the run is flagged as a blow-up (m/s).
    pub speed_limit: f64,
    /// Displacement cap (cm); larger results are reported capped + flagged.
    pub cap_cm: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            duration: 1.0,
            gravity: 9.81,
            stiffness: 5e3,
            damping_ratio: 1.0,
            density: 500.0,
            friction: 0.8,
            speed_limit: 10.0,
            cap_cm: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOutcome {
    /// |final - initial| center-of-mass displacement, capped, in cm.
    pub displacement_cm: f64,
    /// Same before capping.
    pub raw_displacement_cm: f64,
    /// True when the cap or the speed limit kicked in.
    pub escaped: bool,
}

/// Mass, center of mass, and body-frame inertia tensor of a closed mesh at
/// uniform density (Eberly's polyhedral mass properties).
pub fn mass_properties(
    mesh: &TriMesh,
    density: f64,
) -> Result<(f64, Point3<f64>, Matrix3<f64>), EvalError> {
    let mut intg = [0.0f64; 10];
    for &[ia, ib, ic] in &mesh.faces {
        let p0 = mesh.vertices[ia];
        let p1 = mesh.vertices[ib];
        let p2 = mesh.vertices[ic];
        let d1 = p1 - p0;
        let d2 = p2 - p0;
        let cr = d1.cross(&d2);

        let sub = |w0: f64, w1: f64, w2: f64| {
            let temp0 = w0 + w1;
            let f1 = temp0 + w2;
            let temp1 = w0 * w0;
            let temp2 = temp1 + w1 * temp0;
            let f2 = temp2 + w2 * f1;
            let f3 = w0 * temp1 + w1 * temp2 + w2 * f2;
            let g0 = f2 + w0 * (f1 + w0);
            let g1 = f2 + w1 * (f1 + w1);
            let g2 = f2 + w2 * (f1 + w2);
            (f1, f2, f3, g0, g1, g2)
        };
        let (f1x, f2x, f3x, g0x, g1x, g2x) = sub(p0.x, p1.x, p2.x);
        let (_f1y, f2y, f3y, g0y, g1y, g2y) = sub(p0.y, p1.y, p2.y);
        let (_f1z, f2z, f3z, g0z, g1z, g2z) = sub(p0.z, p1.z, p2.z);

        intg[0] += cr.x * f1x;
        intg[1] += cr.x * f2x;
        intg[2] += cr.y * f2y;
        intg[3] += cr.z * f2z;
        intg[4] += cr.x * f3x;
        intg[5] += cr.y * f3y;
        intg[6] += cr.z * f3z;
        intg[7] += cr.x * (p0.y * g0x + p1.y * g1x + p2.y * g2x);
        intg[8] += cr.y * (p0.z * g0y + p1.z * g1y + p2.z * g2y);
        intg[9] += cr.z * (p0.x * g0z + p1.x * g1z + p2.x * g2z);
    }
    let scale = [
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 24.0,
        1.0 / 24.0,
        1.0 / 60.0,
        1.0 / 60.0,
        1.0 / 60.0,
        1.0 / 120.0,
        1.0 / 120.0,
        1.0 / 120.0,
    ];
    for (v, s) in intg.iter_mut().zip(scale) {
        *v *= s;
    }
    let volume = intg[0];
    if volume <= 1e-12 {
        return Err(EvalError::Metric(format!(
            "mesh volume {volume} is not positive; the simulation needs a closed, outward-oriented mesh"
        )));
    }
    let mass = density * volume;
    let com = Point3::new(intg[1] / volume, intg[2] / volume, intg[3] / volume);
    let cx = com.x;
    let cy = com.y;
    let cz = com.z;
    let ixx = density * (intg[5] + intg[6]) - mass * (cy * cy + cz * cz);
    let iyy = density * (intg[4] + intg[6]) - mass * (cz * cz + cx * cx);
    let izz = density * (intg[4] + intg[5]) - mass * (cx * cx + cy * cy);
    let ixy = -(density * intg[7] - mass * cx * cy);
    let iyz = -(density * intg[8] - mass * cy * cz);
    let ixz = -(density * intg[9] - mass * cz * cx);
    let inertia = Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz);
    Ok((mass, com, inertia))
}

/// Simulates the object under gravity with the (optional) static hand
/// collider and optional ground plane, returning the center-of-mass drift.
/// Contact processing order is fixed, so runs are deterministic.
pub fn simulation_displacement(
    hand: Option<&HandCollider>,
    object: &TriMesh,
    contact_points: &[Point3<f64>],
    ground_z: Option<f64>,
    cfg: &SimConfig,
) -> Result<SimOutcome, EvalError> {
    let (mass, com0, inertia_body) = mass_properties(object, cfg.density)?;
    let inv_inertia_body = inertia_body
        .try_inverse()
        .ok_or_else(|| EvalError::Metric("singular inertia tensor".into()))?;
    // body-frame offsets of the contact sample points
    let offsets: Vec<Vector3<f64>> = contact_points.iter().map(|p| p - com0).collect();

    let mut x = com0;
    let mut q = UnitQuaternion::identity();
    let mut v = Vector3::zeros();
    let mut w = Vector3::zeros();
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let c_total = 2.0 * cfg.damping_ratio * (cfg.stiffness * mass).sqrt();
    let mut escaped = false;

    for _ in 0..steps {
        let rot: Rotation3<f64> = q.to_rotation_matrix();
        // collect active contacts first so stiffness can be split evenly
        let mut active: Vec<(Vector3<f64>, f64, Vector3<f64>)> = Vec::new();
        for r in &offsets {
            let arm = rot * r;
            let p = x + arm;
            if let Some(h) = hand {
                let phi = h.distance(&p);
                if phi < 0.0 {
                    active.push((arm, -phi, h.gradient(&p)));
                }
            }
            if let Some(gz) = ground_z {
                let phi = p.z - gz;
                if phi < 0.0 {
                    active.push((arm, -phi, Vector3::z()));
                }
            }
        }
        // explicit spring + Coulomb-capped tangential friction; the bulk
        // damping is folded in implicitly below so the step stays stable
        // regardless of how stiff the dampers are
        let mut force = Vector3::new(0.0, 0.0, -mass * cfg.gravity);
        let mut torque = Vector3::zeros();
        let mut arm2_sum = 0.0;
        if !active.is_empty() {
            let n_act = active.len() as f64;
            let k = cfg.stiffness / n_act;
            let c = c_total / n_act;
            for (arm, pen, normal) in &active {
                let fn_mag = k * pen;
                let mut f = normal * fn_mag;
                let v_pt = v + w.cross(arm);
                let v_tan = v_pt - normal * v_pt.dot(normal);
                let speed = v_tan.norm();
                if speed > 1e-9 {
                    // viscous at low speed, clamped by the Coulomb cone and
                    // by the impulse that would reverse the sliding
                    let f_mag = (c * speed)
                        .min(cfg.friction * fn_mag)
                        .min(speed * mass / (cfg.dt * n_act));
                    f -= v_tan * (f_mag / speed);
                }
                force += f;
                torque += arm.cross(&f);
                arm2_sum += arm.norm_squared();
            }
        }
        let rot_m = *rot.matrix();
        let inertia_world = rot_m * inertia_body * rot_m.transpose();
        let inv_inertia_world = rot_m * inv_inertia_body * rot_m.transpose();
        v += force * (cfg.dt / mass);
        w += inv_inertia_world * (torque - w.cross(&(inertia_world * w))) * cfg.dt;
        if !active.is_empty() {
            // implicit linear drag: c_total acts on the body velocity
            v /= 1.0 + cfg.dt * c_total / mass;
            // implicit angular drag matched to the contact-spring rotational
            // stiffness k_rot = K * mean(arm^2)
            let i_mean = inertia_world.trace() / 3.0;
            let k_rot = cfg.stiffness * arm2_sum / active.len() as f64;
            let c_rot = 2.0 * cfg.damping_ratio * (k_rot * i_mean).sqrt();
            w /= 1.0 + cfg.dt * c_rot / i_mean;
        }
        x += v * cfg.dt;
        let dq = UnitQuaternion::from_scaled_axis(w * cfg.dt);
        q = dq * q;
        if v.norm() > cfg.speed_limit {
            escaped = true;
            break;
        }
    }

    let raw = (x - com0).norm() * 100.0;
    let capped = raw.min(cfg.cap_cm);
    Ok(SimOutcome {
        displacement_cm: capped,
        raw_displacement_cm: raw,
        escaped: escaped || raw > cfg.cap_cm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{sample_surface, shapes};

    #[test]
    fn cube_mass_properties_match_analytic() {
        let a = 0.1; // 10 cm cube
        let cube = shapes::box_mesh(&Vector3::new(a / 2.0, a / 2.0, a / 2.0), 2);
        let (m, com, inertia) = mass_properties(&cube, 1000.0).unwrap();
        assert!((m - 1.0).abs() < 1e-9);
        assert!(com.coords.norm() < 1e-12);
        let expect = m * a * a / 6.0;
        for i in 0..3 {
            assert!((inertia[(i, i)] - expect).abs() / expect < 1e-9);
            for j in 0..3 {
                if i != j {
                    assert!(inertia[(i, j)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn free_fall_matches_half_g_t_squared_before_capping() {
        let cube = shapes::box_mesh(&Vector3::new(0.02, 0.02, 0.02), 1);
        let pts = sample_surface(&cube, 64, 1).unwrap();
        let cfg = SimConfig::default();
        let out = simulation_displacement(None, &cube, &pts.points, None, &cfg).unwrap();
        // semi-implicit Euler lands at (1/2) g t^2 (1 + dt/t)
        let expect = 0.5 * cfg.gravity * (1.0 + cfg.dt) * 100.0;
        assert!(
            (out.raw_displacement_cm - expect).abs() / expect < 0.01,
            "raw = {} vs {expect}",
            out.raw_displacement_cm
        );
        assert_eq!(out.displacement_cm, cfg.cap_cm);
        assert!(out.escaped);
    }

    #[test]
    fn resting_on_ground_is_static() {
        let cube = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 2);
        let pts = sample_surface(&cube, 512, 2).unwrap();
        let cfg = SimConfig::default();
        // ground exactly at the cube's lower face
        let out = simulation_displacement(None, &cube, &pts.points, Some(-0.03), &cfg).unwrap();
        assert!(
            out.displacement_cm < 0.1,
            "displacement = {}",
            out.displacement_cm
        );
        assert!(!out.escaped);
    }

    #[test]
    fn deterministic_trajectory() {
        let cube = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 2);
        let pts = sample_surface(&cube, 256, 3).unwrap();
        let cfg = SimConfig::default();
        let a = simulation_displacement(None, &cube, &pts.points, Some(-0.028), &cfg).unwrap();
        let b = simulation_displacement(None, &cube, &pts.points, Some(-0.028), &cfg).unwrap();
        assert_eq!(a.displacement_cm, b.displacement_cm);
        assert_eq!(a.raw_displacement_cm, b.raw_displacement_cm);
    }
}
