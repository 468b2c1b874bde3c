// Probes one family's pregrasp/closing pipeline step by step.
use graspsynth::dataset::{generate_synthetic_dataset, SynthConfig, AffordanceType};
use graspsynth::eval::{penetration_depth, part_accuracy, simulation_displacement, SimConfig};
use graspsynth::hand::{forward_kinematics, joint_limit_excess, HandModel};

fn main() {
    let hand = HandModel::builtin();
    let mut cfg = SynthConfig::with_count_per_type(0);
    let fam = std::env::args().nth(1).unwrap_or_else(|| "handle".into());
    let aff = match fam.as_str() {
        f if f.contains("handle") => AffordanceType::HandleGrip,
        f if f.contains("twist") => AffordanceType::Twist,
        f if f.contains("wrap") => AffordanceType::WrapAroundGrip,
        f if f.contains("base") => AffordanceType::BaseSupport,
        _ => AffordanceType::TriggerSqueeze,
    };
    *cfg.counts.get_mut(&aff).unwrap() = 1;
    cfg.max_attempts = 1;
    // relax the gates completely so we can see the raw numbers
    cfg.max_penetration_cm = 1e9;
    cfg.max_sim_displacement_cm = 1e9;
    cfg.require_part_contact = false;
    match generate_synthetic_dataset(&cfg, 42, &hand) {
        Ok(ds) => {
            for inst in &ds.instances {
                let obj = ds.object(&inst.object_id).unwrap();
                let fk = forward_kinematics(&hand, &inst.pose);
                let pen = penetration_depth(&fk.mesh, &obj.mesh);
                let (ok, frac) = part_accuracy(&fk.mesh, obj, inst.contact_part_id, 0.005);
                let col = fk.collider(&hand);
                let sim = simulation_displacement(Some(&col), &obj.mesh, &obj.surface.points, None, &SimConfig::default()).unwrap();
                let ex = joint_limit_excess(&inst.pose.intrinsics, &hand.limits);
                println!(
                    "{aff} pen={pen:.3}cm part_ok={ok} frac={frac:.2} sim={:.2}cm escaped={} limit_excess={:?}",
                    sim.displacement_cm, sim.escaped, ex.iter().sum::<f64>()
                );
                println!("theta = {:?}", inst.pose.intrinsics.theta.map(|t| (t * 100.0).round() / 100.0));
                // contact histogram: which part, which hand link
                let index = graspsynth::geom::NnIndex::build(&obj.surface.points);
                let mut per_part = std::collections::BTreeMap::new();
                let mut per_link = std::collections::BTreeMap::new();
                for (i, v) in fk.mesh.vertices.iter().enumerate() {
                    let (_, id) = index.nearest(v).unwrap();
                    if obj.mesh.surface_distance(v) <= 0.005 {
                        let part = obj.segmentation.part_names
                            [obj.segmentation.point_part_ids[id] as usize]
                            .clone();
                        *per_part.entry(part).or_insert(0) += 1;
                        *per_link.entry(fk.mesh.link_ids[i]).or_insert(0) += 1;
                    }
                }
                println!("contacts by part: {per_part:?}");
                println!("contacts by link: {per_link:?}");
            }
        }
        Err(e) => println!("STILL failed with relaxed gates: {e}"),
    }
}
