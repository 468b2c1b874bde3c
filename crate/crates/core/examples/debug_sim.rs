use graspsynth::eval::{mass_properties, SimConfig};
use graspsynth::geom::{sample_surface, shapes};
use nalgebra::{Point3, Rotation3, UnitQuaternion, Vector3};

fn main() {
    let cube = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 2);
    let pts = sample_surface(&cube, 512, 2).unwrap();
    let cfg = SimConfig::default();
    let (mass, com0, inertia_body) = mass_properties(&cube, cfg.density).unwrap();
    println!("mass={mass} com={com0:?}");
    let inv_inertia_body = inertia_body.try_inverse().unwrap();
    let offsets: Vec<Vector3<f64>> = pts.points.iter().map(|p| p - com0).collect();
    let gz = -0.03;
    let mut x = com0;
    let mut q = UnitQuaternion::identity();
    let mut v = Vector3::zeros();
    let mut w = Vector3::zeros();
    let c_total = 2.0 * (cfg.stiffness * mass).sqrt();
    for step in 0..240 {
        let rot: Rotation3<f64> = q.to_rotation_matrix();
        let mut active: Vec<(Vector3<f64>, f64, Vector3<f64>)> = Vec::new();
        for r in &offsets {
            let arm = rot * r;
            let p = x + arm;
            let phi = p.z - gz;
            if phi < 0.0 {
                active.push((arm, -phi, Vector3::z()));
            }
        }
        let mut force = Vector3::new(0.0, 0.0, -mass * cfg.gravity);
        let mut torque = Vector3::zeros();
        if !active.is_empty() {
            let k = cfg.stiffness / active.len() as f64;
            let c = c_total / active.len() as f64;
            for (arm, pen, normal) in &active {
                let v_pt = v + w.cross(arm);
                let f = normal * (k * pen) - v_pt * c;
                force += f;
                torque += arm.cross(&f);
            }
        }
        let rot_m = *rot.matrix();
        let inertia_world = rot_m * inertia_body * rot_m.transpose();
        let inv_inertia_world = rot_m * inv_inertia_body * rot_m.transpose();
        v += force * (cfg.dt / mass);
        w += inv_inertia_world * (torque - w.cross(&(inertia_world * w))) * cfg.dt;
        x += v * cfg.dt;
        let dq = UnitQuaternion::from_scaled_axis(w * cfg.dt);
        q = dq * q;
        if step % 20 == 0 || step < 6 {
            println!(
                "step {step}: z={:.6} |v|={:.4} |w|={:.4} n_act={} |disp|={:.4}",
                x.z, v.norm(), w.norm(), active.len(), (x - com0).norm()
            );
        }
    }
    println!("final displacement cm = {}", (x - com0).norm() * 100.0);
    let _ = Point3::new(0.0, 0.0, 0.0);
}
