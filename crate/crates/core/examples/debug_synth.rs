use graspsynth::dataset::{generate_synthetic_dataset, SynthConfig, AFFORDANCE_TYPES};
use graspsynth::eval::{penetration_depth, part_accuracy, simulation_displacement, SimConfig};
use graspsynth::hand::{forward_kinematics, HandModel};

fn main() {
    let hand = HandModel::builtin();
    let mut cfg = SynthConfig::with_count_per_type(0);
    let which: Vec<String> = std::env::args().skip(1).collect();
    for aff in AFFORDANCE_TYPES {
        if !which.is_empty() && !which.iter().any(|w| aff.as_str().contains(w.as_str())) {
            continue;
        }
        *cfg.counts.get_mut(&aff).unwrap() = 2;
    }
    cfg.max_attempts = 1; // report raw quality of the first attempt
    match generate_synthetic_dataset(&cfg, 42, &hand) {
        Ok(ds) => {
            println!("generated {} instances", ds.instances.len());
            for inst in &ds.instances {
                let obj = ds.object(&inst.object_id).unwrap();
                let fk = forward_kinematics(&hand, &inst.pose);
                let pen = penetration_depth(&fk.mesh, &obj.mesh);
                let (ok, frac) = part_accuracy(&fk.mesh, obj, inst.contact_part_id, 0.005);
                let col = fk.collider(&hand);
                let sim = simulation_displacement(Some(&col), &obj.mesh, &obj.surface.points, None, &SimConfig::default()).unwrap();
                println!(
                    "{:<18} pen={:.3}cm part_ok={} frac={:.2} sim={:.2}cm escaped={}",
                    inst.affordance.to_string(), pen, ok, frac, sim.displacement_cm, sim.escaped
                );
            }
        }
        Err(e) => println!("generation failed: {e}"),
    }
}
