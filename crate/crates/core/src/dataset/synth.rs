//! Procedural synthetic dataset: five object families, one per affordance
//! type, each with a parametric, penetration-free grasp pose constructed
//! from geometry and validated by the evaluation metrics. Deterministic
//! per seed; invalid samples are rejected and resampled with a fresh
//! sub-stream.

use std::collections::BTreeMap;

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{penetration_depth, simulation_displacement, part_accuracy, SimConfig};
use crate::geom::shapes::{PlacedShape, Shape, ShapeSet};
use crate::geom::sample_surface;
use crate::hand::{
    forward_kinematics, joint_limit_excess, HandExtrinsics, HandModel, HandPose,
    SEGMENTS_PER_FINGER,
};

use super::types::{AffordanceType, GraspInstance, ObjectModel, PartSegmentation};
use super::{Dataset, DatasetError};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Instances to generate per affordance type.
    pub counts: BTreeMap<AffordanceType, usize>,
    /// Surface sample count per object.
    pub n_surface: usize,
    /// Attempts per instance before giving up.
    pub max_attempts: usize,
    /// Validation gates (evaluation-module metrics).
    pub max_penetration_cm: f64,
    pub max_sim_displacement_cm: f64,
    /// Require majority contact on the annotated part.
    pub require_part_contact: bool,
    pub sim: SimConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut counts = BTreeMap::new();
        for a in super::AFFORDANCE_TYPES {
            counts.insert(a, 20);
        }
        Self {
            counts,
            n_surface: 2048,
            max_attempts: 12,
            max_penetration_cm: 0.3,
            max_sim_displacement_cm: 2.0,
            require_part_contact: true,
            sim: SimConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn with_count_per_type(n: usize) -> Self {
        let mut cfg = Self::default();
        for v in cfg.counts.values_mut() {
            *v = n;
        }
        cfg
    }
}

/// How sampled surface points get part labels.
enum LabelMode {
    /// Label by nearest primitive, mapped through `shape_parts`.
    NearestShape,
    /// Label by a horizontal split plane: below is `below`, else `above`.
    SplitZ { z: f64, below: u8, above: u8 },
}

/// An object under construction: primitives plus per-primitive part labels.
struct BuiltObject {
    shapes: ShapeSet,
    /// part id per primitive (used by `LabelMode::NearestShape`)
    shape_parts: Vec<u8>,
    part_names: Vec<String>,
    label: LabelMode,
    contact_part: u8,
    instruction: String,
    pregrasp: HandPose,
    /// Fingers to close, in closing order (0 = thumb).
    close_order: Vec<usize>,
    /// Stop closing a finger entirely at its first contact (pinch style)
    /// instead of letting the remaining joints keep conforming.
    stop_finger_on_contact: bool,
}

/// Generates the synthetic dataset. Deterministic per seed: instance `i` of
/// family `f`, attempt `a` uses an RNG stream derived from `(seed, f, i, a)`.
pub fn generate_synthetic_dataset(
    cfg: &SynthConfig,
    seed: u64,
    model: &HandModel,
) -> Result<Dataset, DatasetError> {
    for (a, &n) in &cfg.counts {
        if n > 0 && cfg.n_surface < 64 {
            return Err(DatasetError::Config(format!(
                "n_surface {} too small to segment parts for {a}",
                cfg.n_surface
            )));
        }
    }
    let plan: Vec<(AffordanceType, usize)> = cfg
        .counts
        .iter()
        .flat_map(|(&aff, &n)| (0..n).map(move |i| (aff, i)))
        .collect();

    let results = crate::exec::map_indexed(plan.len(), |idx| {
        let (aff, inst_idx) = plan[idx];
        generate_instance(cfg, seed, model, aff, inst_idx)
    });

    let mut dataset = Dataset::default();
    for (idx, r) in results.into_iter().enumerate() {
        let (aff, inst_idx) = plan[idx];
        let (object, pose, instruction, contact_part) = r?;
        let object_id = format!("{}_{inst_idx:03}", aff.as_str().replace('-', "_"));
        let object = ObjectModel {
            id: object_id.clone(),
            ..object
        };
        dataset.objects.insert(object_id.clone(), object);
        dataset.instances.push(GraspInstance {
            id: idx,
            instruction,
            object_id,
            pose,
            affordance: aff,
            contact_part_id: contact_part,
        });
    }
    Ok(dataset)
}

fn generate_instance(
    cfg: &SynthConfig,
    seed: u64,
    model: &HandModel,
    aff: AffordanceType,
    inst_idx: usize,
) -> Result<(ObjectModel, HandPose, String, u8), DatasetError> {
    let family_idx = super::AFFORDANCE_TYPES
        .iter()
        .position(|&a| a == aff)
        .unwrap() as u64;
    for attempt in 0..cfg.max_attempts {
        let stream = seed
            ^ (family_idx.wrapping_mul(0x9e37_79b9_7f4a_7c15))
            ^ ((inst_idx as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9))
            ^ ((attempt as u64).wrapping_mul(0x94d0_49bb_1331_11eb));
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let built = match aff {
            AffordanceType::HandleGrip => build_kettle(&mut rng),
            AffordanceType::Twist => build_capped_jar(&mut rng),
            AffordanceType::WrapAroundGrip => build_bottle(&mut rng),
            AffordanceType::BaseSupport => build_bowl(&mut rng),
            AffordanceType::TriggerSqueeze => build_sprayer(&mut rng),
        };
        // close the fingers onto the object surface
        let sdf = |p: &Point3<f64>| built.shapes.sdf(p);
        let pose = close_fingers_opt(
            model,
            &built.pregrasp,
            &sdf,
            &built.close_order,
            built.stop_finger_on_contact,
        );
        let debug = std::env::var_os("SYNTH_DEBUG").is_some();
        if joint_limit_excess(&pose.intrinsics, &model.limits) != [0.0; 16] {
            if debug {
                eprintln!("[synth] {aff}#{inst_idx}a{attempt}: joint limits exceeded");
            }
            continue;
        }
        let object = instantiate_object(&built, cfg.n_surface, stream)?;
        // contact part needs enough samples for a stable OBB
        let part_points = object
            .segmentation
            .part_point_indices(built.contact_part)
            .len();
        if part_points < 32 {
            if debug {
                eprintln!("[synth] {aff}#{inst_idx}a{attempt}: only {part_points} part points");
            }
            continue;
        }
        let fk = forward_kinematics(model, &pose);
        let pen = penetration_depth(&fk.mesh, &object.mesh);
        if pen >= cfg.max_penetration_cm {
            if debug {
                eprintln!("[synth] {aff}#{inst_idx}a{attempt}: penetration {pen:.3} cm");
            }
            continue;
        }
        let (on_part, frac) = part_accuracy(&fk.mesh, &object, built.contact_part, 0.005);
        if cfg.require_part_contact && !on_part {
            if debug {
                eprintln!("[synth] {aff}#{inst_idx}a{attempt}: part fraction {frac:.2}");
            }
            continue;
        }
        let collider = fk.collider(model);
        let sim = simulation_displacement(
            Some(&collider),
            &object.mesh,
            &object.surface.points,
            None,
            &cfg.sim,
        )
        .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        if sim.escaped || sim.displacement_cm >= cfg.max_sim_displacement_cm {
            if debug {
                eprintln!(
                    "[synth] {aff}#{inst_idx}a{attempt}: sim {:.2} cm escaped={}",
                    sim.displacement_cm, sim.escaped
                );
            }
            continue;
        }
        return Ok((object, pose, built.instruction, built.contact_part));
    }
    Err(DatasetError::Config(format!(
        "could not generate a valid {aff} grasp for instance {inst_idx} within {} attempts",
        cfg.max_attempts
    )))
}

fn instantiate_object(
    built: &BuiltObject,
    n_surface: usize,
    stream: u64,
) -> Result<ObjectModel, DatasetError> {
    let mesh = built.shapes.mesh();
    let sample_seed = stream ^ 0x5151_5151;
    let surface = sample_surface(&mesh, n_surface, sample_seed)?;
    let labels: Vec<u8> = surface
        .points
        .iter()
        .map(|p| match built.label {
            LabelMode::NearestShape => built.shape_parts[built.shapes.nearest_shape(p)],
            LabelMode::SplitZ { z, below, above } => {
                if p.z < z {
                    below
                } else {
                    above
                }
            }
        })
        .collect();
    let segmentation = PartSegmentation {
        point_part_ids: labels,
        part_names: built.part_names.clone(),
    };
    segmentation.validate(surface.len())?;
    Ok(ObjectModel {
        id: String::new(),
        mesh,
        surface,
        segmentation,
        scale: 1.0,
        sample_seed,
    })
}

/// Joint-by-joint finger closing: each flexion joint advances until the
/// distal chain first touches the surface (signed distance crosses the
/// target gap), then bisects the final step. Purely geometric and
/// deterministic.
pub fn close_fingers(
    model: &HandModel,
    pregrasp: &HandPose,
    sdf: &dyn Fn(&Point3<f64>) -> f64,
    fingers: &[usize],
) -> HandPose {
    close_fingers_opt(model, pregrasp, sdf, fingers, false)
}

fn close_fingers_opt(
    model: &HandModel,
    pregrasp: &HandPose,
    sdf: &dyn Fn(&Point3<f64>) -> f64,
    fingers: &[usize],
    stop_finger_on_contact: bool,
) -> HandPose {
    let mut pose = pregrasp.clone();
    let target = -0.0005; // aim for ~0.5 mm penetration so contacts engage
    let coarse = 0.03;
    for &f in fingers {
        for s in 0..SEGMENTS_PER_FINGER {
            let j = f * SEGMENTS_PER_FINGER + s;
            let lo = model.limits.lower[j];
            let hi = model.limits.upper[j];
            let chain_gap = |pose: &HandPose| -> f64 {
                let fk = forward_kinematics(model, pose);
                let mut min_gap = f64::INFINITY;
                for link in (1 + f * SEGMENTS_PER_FINGER + s)..(1 + (f + 1) * SEGMENTS_PER_FINGER)
                {
                    let (a, b) = model.link_range(link);
                    for v in &fk.mesh.vertices[a..b] {
                        min_gap = min_gap.min(sdf(v));
                    }
                }
                min_gap
            };
            if chain_gap(&pose) <= target {
                if s == 0 || !stop_finger_on_contact {
                    // already embedded: retract this joint until the chain
                    // just clears the target gap
                    let mut t = pose.intrinsics.theta[j];
                    while t > lo && chain_gap(&pose) <= target {
                        t = (t - coarse).max(lo);
                        pose.intrinsics.theta[j] = t;
                    }
                }
                if stop_finger_on_contact {
                    break;
                }
                continue;
            }
            let mut lo_angle = pose.intrinsics.theta[j];
            let mut contact_angle = None;
            let mut t = lo_angle;
            while t < hi {
                t = (t + coarse).min(hi);
                pose.intrinsics.theta[j] = t;
                if chain_gap(&pose) <= target {
                    contact_angle = Some(t);
                    break;
                }
                lo_angle = t;
            }
            match contact_angle {
                None => {
                    pose.intrinsics.theta[j] = hi;
                }
                Some(mut hi_angle) => {
                    for _ in 0..8 {
                        let mid = 0.5 * (lo_angle + hi_angle);
                        pose.intrinsics.theta[j] = mid;
                        if chain_gap(&pose) <= target {
                            hi_angle = mid;
                        } else {
                            lo_angle = mid;
                        }
                    }
                    pose.intrinsics.theta[j] = hi_angle;
                    if stop_finger_on_contact {
                        break;
                    }
                }
            }
        }
    }
    pose
}

fn pose_from(rot: Rotation3<f64>, t: Vector3<f64>, theta: [f64; 16]) -> HandPose {
    HandPose {
        extrinsics: HandExtrinsics::from_rotation(t, rot),
        intrinsics: crate::hand::HandIntrinsics { theta },
    }
}

fn range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

/// Kettle: vertical body, two posts, and a horizontal overhead handle bar.
/// The hand wraps the bar from above; curled fingers hook under it, so the
/// grip supports the weight geometrically.
fn build_kettle(rng: &mut ChaCha8Rng) -> BuiltObject {
    let rb = range(rng, 0.042, 0.058);
    let hb = range(rng, 0.045, 0.060);
    let bar_r = range(rng, 0.0085, 0.0105);
    let bar_half = 0.055;
    let bar_z = hb + range(rng, 0.050, 0.060);
    let x_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);

    let shapes = ShapeSet {
        shapes: vec![
            PlacedShape::new(
                Shape::Cylinder { r: rb, hz: hb },
                Rotation3::identity(),
                Vector3::zeros(),
            ),
            PlacedShape::new(
                Shape::Cylinder {
                    r: bar_r * 0.85,
                    hz: (bar_z - hb) / 2.0 + 0.005,
                },
                Rotation3::identity(),
                Vector3::new(-bar_half, 0.0, hb + (bar_z - hb) / 2.0),
            ),
            PlacedShape::new(
                Shape::Cylinder {
                    r: bar_r * 0.85,
                    hz: (bar_z - hb) / 2.0 + 0.005,
                },
                Rotation3::identity(),
                Vector3::new(bar_half, 0.0, hb + (bar_z - hb) / 2.0),
            ),
            // handle bar along x
            PlacedShape::new(
                Shape::Cylinder {
                    r: bar_r,
                    hz: bar_half,
                },
                x_rot,
                Vector3::new(0.0, 0.0, bar_z),
            ),
        ],
    };
    let object = pick(rng, &["kettle", "pan", "basket"]);
    let verb = pick(rng, &["pour some tea", "lift it", "carry it to the table"]);
    let palm_halfz = 0.012;
    let t = Vector3::new(0.0, -0.051, bar_z + bar_r + palm_halfz - 0.0015);
    BuiltObject {
        shapes,
        shape_parts: vec![0, 0, 0, 1],
        part_names: vec!["body".into(), "handle".into()],
        label: LabelMode::NearestShape,
        contact_part: 1,
        instruction: format!("hold the {object} by its handle to {verb}"),
        pregrasp: pose_from(Rotation3::identity(), t, [0.0; 16]),
        close_order: vec![1, 2, 3, 4, 0],
        stop_finger_on_contact: false,
    }
}

/// Jar with a wide twist lid: the hand grips the lid from above, palm on
/// the lid top, fingers hooking over the rim (the body is narrower, so the
/// rim overhangs and the hooked fingers support the weight).
fn build_capped_jar(rng: &mut ChaCha8Rng) -> BuiltObject {
    let rc = range(rng, 0.032, 0.042);
    let hc = range(rng, 0.009, 0.012);
    let rb = rc * range(rng, 0.74, 0.84);
    let hb = range(rng, 0.035, 0.05);
    let lid_z = 2.0 * hb + hc - 0.002;

    let shapes = ShapeSet {
        shapes: vec![
            PlacedShape::new(
                Shape::Cylinder { r: rb, hz: hb },
                Rotation3::identity(),
                Vector3::new(0.0, 0.0, hb),
            ),
            PlacedShape::new(
                Shape::Cylinder { r: rc, hz: hc },
                Rotation3::identity(),
                Vector3::new(0.0, 0.0, lid_z),
            ),
        ],
    };
    let object = pick(rng, &["jar", "bottle", "thermos"]);
    let verb = pick(rng, &["open it", "loosen the lid", "unscrew it"]);
    let lid_top = lid_z + hc;
    let t = Vector3::new(0.0, -0.047, lid_top + 0.012 - 0.0015);
    let mut theta = [0.0; 16];
    theta[15] = -0.25;
    BuiltObject {
        shapes,
        shape_parts: vec![0, 1],
        part_names: vec!["body".into(), "cap".into()],
        label: LabelMode::NearestShape,
        contact_part: 1,
        instruction: format!("twist the cap of the {object} to {verb}"),
        pregrasp: pose_from(Rotation3::identity(), t, theta),
        close_order: vec![1, 2, 3, 4, 0],
        stop_finger_on_contact: false,
    }
}

/// Bottle lying on its side: full-palm wrap around the horizontal body.
fn build_bottle(rng: &mut ChaCha8Rng) -> BuiltObject {
    let rb = range(rng, 0.023, 0.033);
    let half_len = range(rng, 0.055, 0.075);
    let neck_r = rb * range(rng, 0.45, 0.6);
    let neck_half = 0.02;
    let x_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);

    let shapes = ShapeSet {
        shapes: vec![
            PlacedShape::new(Shape::Cylinder { r: rb, hz: half_len }, x_rot, Vector3::zeros()),
            PlacedShape::new(
                Shape::Cylinder {
                    r: neck_r,
                    hz: neck_half,
                },
                x_rot,
                Vector3::new(half_len + neck_half - 0.002, 0.0, 0.0),
            ),
        ],
    };
    let object = pick(rng, &["bottle", "flask", "canister"]);
    let verb = pick(rng, &["hold it firmly", "pick it up", "pass it over"]);
    // hand beside the cylinder, palm facing it, fingers hanging down and
    // curling underneath: the grip opening faces up, so gravity seats the
    // object into the hook
    let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), -std::f64::consts::FRAC_PI_2);
    let t = Vector3::new(-0.01, rb + 0.012 - 0.0005, 0.045 - rb - 0.004);
    let mut theta = [0.0; 16];
    theta[15] = 0.2;
    BuiltObject {
        shapes,
        shape_parts: vec![0, 1],
        part_names: vec!["body".into(), "neck".into()],
        label: LabelMode::NearestShape,
        contact_part: 0,
        instruction: format!("wrap your fingers around the body of the {object} to {verb}"),
        pregrasp: pose_from(rot, t, theta),
        close_order: vec![1, 2, 3, 4, 0],
        stop_finger_on_contact: false,
    }
}

/// Shallow dish supported from underneath: the palm (facing up) carries
/// the bottom face and the fingers press up against it; the "base" part is
/// the bottom slab of the dish surface.
fn build_bowl(rng: &mut ChaCha8Rng) -> BuiltObject {
    let rb = range(rng, 0.050, 0.066);
    let half_h = range(rng, 0.012, 0.016);
    let shapes = ShapeSet {
        shapes: vec![PlacedShape::new(
            Shape::Cylinder { r: rb, hz: half_h },
            Rotation3::identity(),
            Vector3::new(0.0, 0.0, half_h),
        )],
    };
    let object = pick(rng, &["bowl", "plate", "dish"]);
    let verb = pick(rng, &["serve it", "carry it steadily", "hold it level"]);
    // palm up underneath, fingers extending under the dish
    let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
    let t = Vector3::new(0.0, 0.030, -0.012 + 0.0008);
    BuiltObject {
        shapes,
        shape_parts: vec![0],
        part_names: vec!["base".into(), "body".into()],
        label: LabelMode::SplitZ {
            z: 0.004,
            below: 0,
            above: 1,
        },
        contact_part: 0,
        instruction: format!("support the {object} under its base to {verb}"),
        pregrasp: pose_from(rot, t, [0.0; 16]),
        close_order: vec![1, 2, 3, 4, 0],
        stop_finger_on_contact: false,
    }
}

/// Spray bottle with a vertical trigger bar in front of the body. The
/// hand grips the bar side-on (fingers squeezing it toward the body); a
/// mounting strut above the grip catches the top finger so the weight is
/// carried geometrically.
fn build_sprayer(rng: &mut ChaCha8Rng) -> BuiltObject {
    let rb = range(rng, 0.024, 0.031);
    let hb = range(rng, 0.055, 0.068);
    let gap = range(rng, 0.019, 0.023);
    let bar_r = range(rng, 0.0055, 0.0070);
    let bar_x = -(rb + gap);
    let strut_half = (gap + 0.012) / 2.0;
    let y_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);

    let shapes = ShapeSet {
        shapes: vec![
            PlacedShape::new(
                Shape::Cylinder { r: rb, hz: hb },
                Rotation3::identity(),
                Vector3::zeros(),
            ),
            // the trigger bar
            PlacedShape::new(
                Shape::Cylinder { r: bar_r, hz: 0.032 },
                Rotation3::identity(),
                Vector3::new(bar_x, 0.0, -0.002),
            ),
            // mounting strut from the bar top back to the body
            PlacedShape::new(
                Shape::Cylinder {
                    r: 0.005,
                    hz: strut_half,
                },
                y_rot,
                Vector3::new(bar_x + strut_half - 0.002, 0.0, 0.028),
            ),
        ],
    };
    let object = pick(rng, &["sprayer", "spray bottle", "mister"]);
    let verb = pick(rng, &["spray the plants", "mist the window", "clean the glass"]);
    // palm faces +x toward the bar from outside; vertical hinges wrap the
    // fingers horizontally around it
    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), -std::f64::consts::FRAC_PI_2);
    let t = Vector3::new(bar_x - bar_r - 0.012 - 0.001, -0.040, -0.014);
    let mut theta = [0.0; 16];
    theta[15] = 0.3;
    BuiltObject {
        shapes,
        shape_parts: vec![0, 1, 1],
        part_names: vec!["body".into(), "trigger".into()],
        label: LabelMode::NearestShape,
        contact_part: 1,
        instruction: format!("squeeze the trigger of the {object} to {verb}"),
        pregrasp: pose_from(rot, t, theta),
        close_order: vec![1, 2, 3, 4, 0],
        stop_finger_on_contact: true,
    }
}
