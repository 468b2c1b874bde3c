//! The seven refinement loss terms, built as tape expressions over the
//! posed hand so every term is differentiable through the FK primitive.
//!
//! Nearest-neighbor correspondences, contact selections and hinge
//! activations are re-resolved every iteration and enter the tape as
//! constants; the gradients are exact for the frozen correspondences
//! (piecewise definition of the objective).

use std::rc::Rc;

use nalgebra::{Point3, Vector3};

use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::ObjectModel;
use crate::geom::NnIndex;
use crate::hand::{forward_kinematics, FkResult, HandMesh, HandModel, HandPose};
use crate::prior::GraspPrior;

use super::{LossBreakdown, RefineConfig, RefineError};

/// Everything a refinement run needs besides the pose.
pub struct RefineContext<'a> {
    pub hand_model: &'a HandModel,
    pub prior: &'a GraspPrior,
    pub object: &'a ObjectModel,
    pub part_index: NnIndex,
    pub object_index: NnIndex,
    pub object_com: Point3<f64>,
    pub cfg: RefineConfig,
    /// Non-adjacent link pairs with their sphere-radius sums.
    spen_pairs: Vec<(usize, usize, f64)>,
}

impl<'a> RefineContext<'a> {
    pub fn new(
        hand_model: &'a HandModel,
        prior: &'a GraspPrior,
        object: &'a ObjectModel,
        cfg: RefineConfig,
    ) -> Result<Self, RefineError> {
        if prior.contact_part.is_empty() {
            return Err(RefineError::InvalidInput("empty contact part".into()));
        }
        if prior.cmap.mu.len() != hand_model.vertex_count() {
            return Err(RefineError::InvalidInput(format!(
                "contact-map distribution length {} does not match hand vertex count {}",
                prior.cmap.mu.len(),
                hand_model.vertex_count()
            )));
        }
        let part_index = NnIndex::build(&prior.contact_part.points);
        let object_index = NnIndex::build(&object.surface.points);
        let object_com = object
            .surface
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords)
            / object.surface.len().max(1) as f64;
        let n_links = hand_model.link_vertices.len();
        let mut spen_pairs = Vec::new();
        for i in 0..n_links {
            for j in (i + 1)..n_links {
                if !hand_model.links_adjacent(i, j) {
                    spen_pairs.push((
                        i,
                        j,
                        hand_model.link_sphere_radii[i] + hand_model.link_sphere_radii[j],
                    ));
                }
            }
        }
        Ok(Self {
            hand_model,
            prior,
            object,
            part_index,
            object_index,
            object_com: Point3::from(object_com),
            cfg,
            spen_pairs,
        })
    }
}

/// Posed hand recorded on a tape: parameter vars plus FK outputs.
pub struct PosedHand {
    pub t: Var,
    pub dr: Var,
    pub theta: Var,
    pub positions: Var,
    pub normals: Var,
    pub fk: Rc<FkResult>,
}

/// Registers [T, dr, theta] as parameters and the FK outputs as custom
/// primitives with the analytic jacobian backward.
pub fn record_hand(tape: &mut Tape, model: &HandModel, pose: &HandPose) -> PosedHand {
    let fk = Rc::new(forward_kinematics(model, pose));
    let n = fk.mesh.vertices.len();
    let t = tape.param(Tensor::vector(vec![
        pose.extrinsics.translation.x,
        pose.extrinsics.translation.y,
        pose.extrinsics.translation.z,
    ]));
    let dr = tape.param(Tensor::vector(vec![0.0; 3]));
    let theta = tape.param(Tensor::vector(pose.intrinsics.theta.to_vec()));

    let mut pos_data = Vec::with_capacity(3 * n);
    for v in &fk.mesh.vertices {
        pos_data.extend_from_slice(&[v.x, v.y, v.z]);
    }
    let mut nrm_data = Vec::with_capacity(3 * n);
    for v in &fk.mesh.normals {
        nrm_data.extend_from_slice(&[v.x, v.y, v.z]);
    }

    let fk_pos = Rc::clone(&fk);
    let positions = tape
        .custom(
            &[t, dr, theta],
            Tensor::new(vec![n, 3], pos_data).unwrap(),
            Rc::new(move |g: &Tensor| {
                let grad = fk_pos.vjp(g.data(), None);
                split_params(&grad)
            }),
        )
        .expect("fk positions node");
    let fk_nrm = Rc::clone(&fk);
    let zeros = vec![0.0; 3 * n];
    let normals = tape
        .custom(
            &[t, dr, theta],
            Tensor::new(vec![n, 3], nrm_data).unwrap(),
            Rc::new(move |g: &Tensor| {
                let grad = fk_nrm.vjp(&zeros, Some(g.data()));
                split_params(&grad)
            }),
        )
        .expect("fk normals node");

    PosedHand {
        t,
        dr,
        theta,
        positions,
        normals,
        fk,
    }
}

fn split_params(grad: &[f64; 22]) -> Vec<Option<Tensor>> {
    vec![
        Some(Tensor::vector(grad[0..3].to_vec())),
        Some(Tensor::vector(grad[3..6].to_vec())),
        Some(Tensor::vector(grad[6..22].to_vec())),
    ]
}

fn points_tensor(points: &[Point3<f64>]) -> Tensor {
    let mut data = Vec::with_capacity(points.len() * 3);
    for p in points {
        data.extend_from_slice(&[p.x, p.y, p.z]);
    }
    Tensor::new(vec![points.len(), 3], data).unwrap()
}

/// `(1/n) sum_j mu_j * min_i |V_j - P_i|` with the nearest part point per
/// hand vertex frozen for this evaluation.
pub fn loss_contact_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let fkm = &hand.fk.mesh;
    let nearest: Vec<Point3<f64>> = fkm
        .vertices
        .iter()
        .map(|v| {
            let (_, id) = ctx.part_index.nearest(v).expect("part nonempty");
            ctx.part_index.point(id)
        })
        .collect();
    let targets = tape.constant(points_tensor(&nearest));
    let mu = tape.constant(Tensor::vector(ctx.prior.cmap.mu.clone()));
    let diff = tape.sub(hand.positions, targets).unwrap();
    let d = tape.row_norm(diff).unwrap();
    let weighted = tape.mul(mu, d).unwrap();
    tape.mean_reduce(weighted).unwrap()
}

/// `(1/n) sum_j e^{-sigma_j} |Chat_j - mu_j|` with `Chat_j = exp(-d_j/tau)`
/// against the frozen nearest object point per vertex.
pub fn loss_cmap_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let fkm = &hand.fk.mesh;
    let nearest: Vec<Point3<f64>> = fkm
        .vertices
        .iter()
        .map(|v| {
            let (_, id) = ctx.object_index.nearest(v).expect("object nonempty");
            ctx.object_index.point(id)
        })
        .collect();
    let targets = tape.constant(points_tensor(&nearest));
    let diff = tape.sub(hand.positions, targets).unwrap();
    let d = tape.row_norm(diff).unwrap();
    let scaled = tape.scale(d, -1.0 / ctx.cfg.tau).unwrap();
    let chat = tape.exp(scaled).unwrap();
    let mu = tape.constant(Tensor::vector(ctx.prior.cmap.mu.clone()));
    let dev = {
        let s = tape.sub(chat, mu).unwrap();
        tape.abs(s).unwrap()
    };
    let w = tape.constant(Tensor::vector(
        ctx.prior.cmap.sigma.iter().map(|s| (-s).exp()).collect(),
    ));
    let weighted = tape.mul(w, dev).unwrap();
    tape.mean_reduce(weighted).unwrap()
}

/// Force-closure surrogate: per fingertip link, the vertex nearest the
/// object surface is a contact when within the threshold. Forces are the
/// (sign-corrected) hand normals at the contacts; the loss is the norm of
/// the net 6-wrench for unit forces plus a hinge when fewer than
/// `fc_min_contacts` contacts exist.
pub fn loss_fc_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let fkm = &hand.fk.mesh;
    let mut contact_idx: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    for link in ctx.hand_model.fingertip_links() {
        let (start, end) = ctx.hand_model.link_range(link);
        let mut best: Option<(f64, usize)> = None;
        for i in start..end {
            let (d, _) = ctx.object_index.nearest(&fkm.vertices[i]).expect("object nonempty");
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((d, i)) = best {
            if d <= ctx.cfg.fc_contact_threshold {
                let (_, oid) = ctx.object_index.nearest(&fkm.vertices[i]).unwrap();
                let to_obj = ctx.object_index.point(oid) - fkm.vertices[i];
                let s = if fkm.normals[i].dot(&to_obj) >= 0.0 { 1.0 } else { -1.0 };
                contact_idx.push(i);
                signs.push(s);
            }
        }
    }
    let m = contact_idx.len();
    let hinge = ctx.cfg.fc_hinge_scale
        * (ctx.cfg.fc_min_contacts.saturating_sub(m)) as f64;
    if m == 0 {
        let z = tape.constant(Tensor::scalar(0.0));
        return tape.add_scalar(z, hinge).unwrap();
    }
    let idx = Rc::new(contact_idx);
    let contact_normals = tape.gather_rows(hand.normals, Rc::clone(&idx)).unwrap();
    let sign_t = {
        let mut data = Vec::with_capacity(m * 3);
        for s in &signs {
            data.extend_from_slice(&[*s, *s, *s]);
        }
        tape.constant(Tensor::new(vec![m, 3], data).unwrap())
    };
    let forces = tape.mul(contact_normals, sign_t).unwrap();
    let contact_pos = tape.gather_rows(hand.positions, idx).unwrap();
    let com = {
        let mut data = Vec::with_capacity(m * 3);
        for _ in 0..m {
            data.extend_from_slice(&[ctx.object_com.x, ctx.object_com.y, ctx.object_com.z]);
        }
        tape.constant(Tensor::new(vec![m, 3], data).unwrap())
    };
    let arms = tape.sub(contact_pos, com).unwrap();
    let torques = tape.row_cross(arms, forces).unwrap();
    let ones = tape.constant(Tensor::new(vec![1, m], vec![1.0; m]).unwrap());
    let fsum = tape.matmul(ones, forces).unwrap();
    let tsum = tape.matmul(ones, torques).unwrap();
    let f3 = tape.reshape(fsum, vec![3]).unwrap();
    let t3 = tape.reshape(tsum, vec![3]).unwrap();
    let wrench = tape.concat(&[f3, t3]).unwrap();
    let norm = tape.row_norm(wrench).unwrap();
    tape.add_scalar(norm, hinge).unwrap()
}

/// Eq.-5-style penetration: object surface points against their nearest
/// hand vertices, hinged at `c_pen`.
pub fn loss_pen_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let fkm = &hand.fk.mesh;
    let hand_index = NnIndex::build(&fkm.vertices);
    let mut idxs = Vec::new();
    let mut points = Vec::new();
    let mut ndata = Vec::new();
    for (o, n) in ctx.object.surface.points.iter().zip(&ctx.object.surface.normals) {
        let (d, vi) = hand_index.nearest(o).expect("hand nonempty");
        if d > crate::generator::PEN_DISTANCE_GATE {
            continue;
        }
        idxs.push(vi);
        points.push(*o);
        ndata.extend_from_slice(&[n.x, n.y, n.z]);
    }
    let m = idxs.len();
    if m == 0 {
        return tape.constant(Tensor::scalar(0.0));
    }
    let gathered = tape.gather_rows(hand.positions, Rc::new(idxs)).unwrap();
    let o_const = tape.constant(points_tensor(&points));
    let n_const = tape.constant(Tensor::new(vec![m, 3], ndata).unwrap());
    let diff = tape.sub(o_const, gathered).unwrap();
    let dot = {
        let p = tape.mul(diff, n_const).unwrap();
        tape.sum_axis1(p).unwrap()
    };
    let hinged = {
        let s = tape.add_scalar(dot, -ctx.cfg.c_pen).unwrap();
        tape.relu(s).unwrap()
    };
    tape.sum_reduce(hinged).unwrap()
}

/// Mirror of the penetration term with roles swapped: hand vertices
/// against their nearest object points, using the hand's own normals.
pub fn loss_revpen_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let fkm = &hand.fk.mesh;
    let mut rows = Vec::new();
    let mut nearest = Vec::new();
    for (i, v) in fkm.vertices.iter().enumerate() {
        let (d, id) = ctx.object_index.nearest(v).expect("object nonempty");
        if d > crate::generator::PEN_DISTANCE_GATE {
            continue;
        }
        rows.push(i);
        nearest.push(ctx.object_index.point(id));
    }
    if rows.is_empty() {
        return tape.constant(Tensor::scalar(0.0));
    }
    let rows = Rc::new(rows);
    let pos = tape.gather_rows(hand.positions, Rc::clone(&rows)).unwrap();
    let nrm = tape.gather_rows(hand.normals, rows).unwrap();
    let o_const = tape.constant(points_tensor(&nearest));
    let diff = tape.sub(pos, o_const).unwrap();
    let dot = {
        let p = tape.mul(diff, nrm).unwrap();
        tape.sum_axis1(p).unwrap()
    };
    let hinged = {
        let s = tape.add_scalar(dot, -ctx.cfg.c_revpen).unwrap();
        tape.relu(s).unwrap()
    };
    tape.sum_reduce(hinged).unwrap()
}

/// Joint-limit excess, summed: `sum_k max(0, lo-t) + max(0, t-hi)`.
pub fn loss_joint_tape(tape: &mut Tape, model: &HandModel, theta: Var) -> Var {
    let lo = tape.constant(Tensor::vector(model.limits.lower.to_vec()));
    let hi = tape.constant(Tensor::vector(model.limits.upper.to_vec()));
    let below = {
        let d = tape.sub(lo, theta).unwrap();
        tape.relu(d).unwrap()
    };
    let above = {
        let d = tape.sub(theta, hi).unwrap();
        tape.relu(d).unwrap()
    };
    let both = tape.add(below, above).unwrap();
    tape.sum_reduce(both).unwrap()
}

/// Sphere-overlap self-penetration over non-adjacent link pairs, with the
/// sphere centers as per-link vertex means so gradients flow through FK.
pub fn loss_spen_tape(tape: &mut Tape, ctx: &RefineContext, hand: &PosedHand) -> Var {
    let mut centers: Vec<Var> = Vec::with_capacity(ctx.hand_model.link_vertices.len());
    for link in 0..ctx.hand_model.link_vertices.len() {
        let (start, end) = ctx.hand_model.link_range(link);
        let n = end - start;
        let rows: Vec<usize> = (start..end).collect();
        let gathered = tape.gather_rows(hand.positions, Rc::new(rows)).unwrap();
        let avg = tape.constant(Tensor::new(vec![1, n], vec![1.0 / n as f64; n]).unwrap());
        centers.push(tape.matmul(avg, gathered).unwrap()); // (1,3)
    }
    let mut total = tape.constant(Tensor::scalar(0.0));
    for &(i, j, r_sum) in &ctx.spen_pairs {
        let diff = tape.sub(centers[i], centers[j]).unwrap();
        let d = tape.row_norm(diff).unwrap(); // (1,)
        let neg = tape.neg(d).unwrap();
        let overlap = {
            let s = tape.add_scalar(neg, r_sum).unwrap();
            tape.relu(s).unwrap()
        };
        let o = tape.sum_reduce(overlap).unwrap();
        total = tape.add(total, o).unwrap();
    }
    total
}

/// Builds the stage objective on a fresh tape and returns the per-term
/// breakdown alongside the total var.
pub fn objective(
    tape: &mut Tape,
    ctx: &RefineContext,
    hand: &PosedHand,
    stage2: bool,
) -> (Var, LossBreakdown) {
    let cfg = &ctx.cfg;
    let contact = loss_contact_tape(tape, ctx, hand);
    let cmap = loss_cmap_tape(tape, ctx, hand);
    let mut breakdown = LossBreakdown {
        contact: tape.value(contact).item(),
        cmap: tape.value(cmap).item(),
        ..Default::default()
    };
    let mut total = {
        let a = tape.scale(contact, cfg.w_contact).unwrap();
        let b = tape.scale(cmap, cfg.w_cmap).unwrap();
        tape.add(a, b).unwrap()
    };
    if stage2 {
        let fc = loss_fc_tape(tape, ctx, hand);
        let pen = loss_pen_tape(tape, ctx, hand);
        let revpen = loss_revpen_tape(tape, ctx, hand);
        let joint = loss_joint_tape(tape, ctx.hand_model, hand.theta);
        let spen = loss_spen_tape(tape, ctx, hand);
        breakdown.fc = tape.value(fc).item();
        breakdown.pen = tape.value(pen).item();
        breakdown.revpen = tape.value(revpen).item();
        breakdown.joint = tape.value(joint).item();
        breakdown.spen = tape.value(spen).item();
        for (v, w) in [
            (fc, cfg.w_fc),
            (pen, cfg.w_pen),
            (revpen, cfg.w_revpen),
            (joint, cfg.w_joint),
            (spen, cfg.w_spen),
        ] {
            let s = tape.scale(v, w).unwrap();
            total = tape.add(total, s).unwrap();
        }
    }
    breakdown.total = breakdown.weighted_total(cfg, stage2);
    (total, breakdown)
}

/// Parameters for the standalone force-closure operation.
#[derive(Debug, Clone, Copy)]
pub struct FcParams {
    pub contact_threshold: f64,
    pub min_contacts: usize,
    pub hinge_scale: f64,
}

impl Default for FcParams {
    fn default() -> Self {
        Self {
            contact_threshold: 0.01,
            min_contacts: 3,
            hinge_scale: 0.3,
        }
    }
}

// ---- plain (non-tape) operation surfaces -------------------------------

/// Contact-attraction term of a posed hand against a contact part.
pub fn loss_contact(
    hand: &HandMesh,
    part_index: &NnIndex,
    prior: &GraspPrior,
) -> Result<f64, RefineError> {
    if part_index.is_empty() {
        return Err(RefineError::InvalidInput("empty contact part".into()));
    }
    let n = hand.vertices.len();
    let mut acc = 0.0;
    for j in 0..n {
        let (d, _) = part_index.nearest(&hand.vertices[j]).unwrap();
        acc += prior.cmap.mu[j] * d;
    }
    Ok(acc / n as f64)
}

/// Contact-map conformance term.
pub fn loss_cmap(hand: &HandMesh, object_index: &NnIndex, prior: &GraspPrior, tau: f64) -> f64 {
    let n = hand.vertices.len();
    let mut acc = 0.0;
    for j in 0..n {
        let (d, _) = object_index.nearest(&hand.vertices[j]).unwrap();
        let chat = (-d / tau).exp();
        acc += (-prior.cmap.sigma[j]).exp() * (chat - prior.cmap.mu[j]).abs();
    }
    acc / n as f64
}

/// Force-closure surrogate on a posed hand.
pub fn loss_fc(
    hand: &HandMesh,
    model: &HandModel,
    object_index: &NnIndex,
    object_com: &Point3<f64>,
    params: &FcParams,
) -> f64 {
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    let mut m = 0usize;
    for link in model.fingertip_links() {
        let (start, end) = model.link_range(link);
        let mut best: Option<(f64, usize)> = None;
        for i in start..end {
            let (d, _) = object_index.nearest(&hand.vertices[i]).unwrap();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((d, i)) = best {
            if d <= params.contact_threshold {
                let (_, oid) = object_index.nearest(&hand.vertices[i]).unwrap();
                let to_obj = object_index.point(oid) - hand.vertices[i];
                let s = if hand.normals[i].dot(&to_obj) >= 0.0 { 1.0 } else { -1.0 };
                let f = hand.normals[i] * s;
                force += f;
                torque += (hand.vertices[i] - object_com).cross(&f);
                m += 1;
            }
        }
    }
    let residual = (force.norm_squared() + torque.norm_squared()).sqrt();
    residual + params.hinge_scale * params.min_contacts.saturating_sub(m) as f64
}

/// Reverse penetration: hand vertices behind the object surface.
pub fn loss_revpen(hand: &HandMesh, object_index: &NnIndex, c_revpen: f64) -> f64 {
    let mut acc = 0.0;
    for (v, n) in hand.vertices.iter().zip(&hand.normals) {
        let (_, oid) = object_index.nearest(v).unwrap();
        let o = object_index.point(oid);
        let gap = (v - o).dot(n) - c_revpen;
        if gap > 0.0 {
            acc += gap;
        }
    }
    acc
}
