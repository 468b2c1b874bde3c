use graspsynth::dataset::{generate_synthetic_dataset, SynthConfig, AffordanceType};
use graspsynth::hand::{forward_kinematics, HandModel};

fn main() {
    let hand = HandModel::builtin();
    let mut cfg = SynthConfig::with_count_per_type(0);
    *cfg.counts.get_mut(&AffordanceType::WrapAroundGrip).unwrap() = 1;
    cfg.max_attempts = 1;
    cfg.max_penetration_cm = 1e9;
    cfg.max_sim_displacement_cm = 1e9;
    let ds = generate_synthetic_dataset(&cfg, 42, &hand).unwrap();
    let inst = &ds.instances[0];
    let obj = ds.object(&inst.object_id).unwrap();
    let fk = forward_kinematics(&hand, &inst.pose);
    let mut worst = (0.0f64, 0usize);
    for (i, v) in fk.mesh.vertices.iter().enumerate() {
        if obj.mesh.contains(v) {
            let d = obj.mesh.surface_distance(v);
            if d > worst.0 {
                worst = (d, i);
            }
        }
    }
    let link = fk.mesh.link_ids[worst.1];
    println!("deepest {:.3}cm at vertex {} link {} pos {:?}", worst.0 * 100.0, worst.1, link, fk.mesh.vertices[worst.1]);
    println!("theta: {:?}", inst.pose.intrinsics.theta.map(|t| (t*100.0).round()/100.0));
}
