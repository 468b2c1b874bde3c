// Prints the object trajectory inside a grasp for one family.
use graspsynth::dataset::{generate_synthetic_dataset, SynthConfig, AffordanceType};
use graspsynth::eval::{mass_properties, SimConfig};
use graspsynth::hand::{forward_kinematics, HandModel};
use nalgebra::{Rotation3, UnitQuaternion, Vector3};

fn main() {
    let hand = HandModel::builtin();
    let mut cfg = SynthConfig::with_count_per_type(0);
    let fam = std::env::args().nth(1).unwrap_or_else(|| "wrap".into());
    let aff = match fam.as_str() {
        f if f.contains("handle") => AffordanceType::HandleGrip,
        f if f.contains("twist") => AffordanceType::Twist,
        f if f.contains("wrap") => AffordanceType::WrapAroundGrip,
        f if f.contains("base") => AffordanceType::BaseSupport,
        _ => AffordanceType::TriggerSqueeze,
    };
    *cfg.counts.get_mut(&aff).unwrap() = 1;
    cfg.max_attempts = 1;
    cfg.max_penetration_cm = 1e9;
    cfg.max_sim_displacement_cm = 1e9;
    let ds = generate_synthetic_dataset(&cfg, 42, &hand).unwrap();
    let inst = &ds.instances[0];
    let obj = ds.object(&inst.object_id).unwrap();
    let fk = forward_kinematics(&hand, &inst.pose);
    let col = fk.collider(&hand);
    let scfg = SimConfig::default();
    let (mass, com0, inertia_body) = mass_properties(&obj.mesh, scfg.density).unwrap();
    let inv_ib = inertia_body.try_inverse().unwrap();
    let offsets: Vec<Vector3<f64>> = obj.surface.points.iter().map(|p| p - com0).collect();
    let mut x = com0;
    let mut q = UnitQuaternion::identity();
    let mut v = Vector3::zeros();
    let mut w = Vector3::zeros();
    let c_total = 2.0 * (scfg.stiffness * mass).sqrt();
    println!("mass={mass:.3}");
    for step in 0..240 {
        let rot: Rotation3<f64> = q.to_rotation_matrix();
        let mut active = Vec::new();
        for r in &offsets {
            let arm = rot * r;
            let p = x + arm;
            let phi = col.distance(&p);
            if phi < 0.0 {
                active.push((arm, -phi, col.gradient(&p)));
            }
        }
        let mut force = Vector3::new(0.0, 0.0, -mass * scfg.gravity);
        let mut torque = Vector3::zeros();
        let mut arm2 = 0.0;
        let n_act = active.len().max(1) as f64;
        let k = scfg.stiffness / n_act;
        let c = c_total / n_act;
        for (arm, pen, normal) in &active {
            let fn_mag = k * pen;
            let mut f = *normal * fn_mag;
            let v_pt = v + w.cross(arm);
            let v_tan = v_pt - normal * v_pt.dot(normal);
            let speed = v_tan.norm();
            if speed > 1e-9 {
                let f_mag = (c * speed).min(scfg.friction * fn_mag).min(speed * mass / (scfg.dt * n_act));
                f -= v_tan * (f_mag / speed);
            }
            force += f;
            torque += arm.cross(&f);
            arm2 += arm.norm_squared();
        }
        let rm = *rot.matrix();
        let iw = rm * inertia_body * rm.transpose();
        let inv_iw = rm * inv_ib * rm.transpose();
        v += force * (scfg.dt / mass);
        w += inv_iw * (torque - w.cross(&(iw * w))) * scfg.dt;
        if !active.is_empty() {
            v /= 1.0 + scfg.dt * c_total / mass;
            let im = iw.trace() / 3.0;
            let kr = scfg.stiffness * arm2 / n_act;
            let cr = 2.0 * (kr * im).sqrt();
            w /= 1.0 + scfg.dt * cr / im;
        }
        x += v * scfg.dt;
        q = UnitQuaternion::from_scaled_axis(w * scfg.dt) * q;
        if step % 24 == 0 {
            let d = x - com0;
            println!("t={:.2}s n={} d=({:+.4},{:+.4},{:+.4}) |d|={:.2}cm |w|={:.2}", step as f64/240.0, active.len(), d.x, d.y, d.z, d.norm()*100.0, w.norm());
        }
    }
}
