//! Stage drivers: Adam over the pose parameters with best-iterate
//! selection. Stage 1 updates extrinsics only; stage 2 updates all 22
//! parameters under the full objective.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Tape, Tensor};
use crate::dataset::ObjectModel;
use crate::eval::{
    part_accuracy, penetration_depth, simulation_displacement, solid_intersection_volume,
    GraspReport, SimConfig,
};
use crate::hand::{forward_kinematics, HandModel, HandPose};
use crate::prior::GraspPrior;

use super::losses::{objective, record_hand, RefineContext};
use super::{LossBreakdown, RefineConfig, RefineError};

struct IterationOutcome {
    breakdown: LossBreakdown,
    grad_t: Tensor,
    grad_dr: Tensor,
    grad_theta: Tensor,
}

fn evaluate(
    ctx: &RefineContext,
    pose: &HandPose,
    stage2: bool,
) -> Result<IterationOutcome, RefineError> {
    let mut tape = Tape::new();
    let hand = record_hand(&mut tape, ctx.hand_model, pose);
    let (total, breakdown) = objective(&mut tape, ctx, &hand, stage2);
    let grads = tape.backward(total)?;
    let zero3 = || Tensor::zeros(&[3]);
    Ok(IterationOutcome {
        breakdown,
        grad_t: grads.get(hand.t).cloned().unwrap_or_else(zero3),
        grad_dr: grads.get(hand.dr).cloned().unwrap_or_else(zero3),
        grad_theta: grads
            .get(hand.theta)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&[16])),
    })
}

fn run_stage(
    ctx: &RefineContext,
    initial: &HandPose,
    stage2: bool,
) -> Result<(HandPose, Vec<LossBreakdown>), RefineError> {
    let lr = if stage2 {
        ctx.cfg.stage2_lr
    } else {
        ctx.cfg.stage1_lr
    };
    let mut pose = initial.clone();
    let mut trace = Vec::with_capacity(ctx.cfg.iterations);
    let mut best_pose = initial.clone();
    let mut best_total = f64::INFINITY;

    // parameters: [t(3), dr(3)] plus theta(16) in stage 2
    let mut params = vec![
        Tensor::vector(vec![
            pose.extrinsics.translation.x,
            pose.extrinsics.translation.y,
            pose.extrinsics.translation.z,
        ]),
        Tensor::zeros(&[3]),
    ];
    if stage2 {
        params.push(Tensor::vector(pose.intrinsics.theta.to_vec()));
    }
    let mut adam = AdamState::for_params(lr, &params);

    for iter in 0..ctx.cfg.iterations {
        let out = evaluate(ctx, &pose, stage2)?;
        if !out.breakdown.total.is_finite() {
            return Err(RefineError::Nan {
                iteration: iter,
                breakdown: out.breakdown,
            });
        }
        trace.push(out.breakdown);
        if out.breakdown.total < best_total {
            best_total = out.breakdown.total;
            best_pose = pose.clone();
        }

        let mut grads = vec![out.grad_t, out.grad_dr];
        if stage2 {
            grads.push(out.grad_theta);
        }
        // the rotation increment is re-linearized at zero every iteration
        params[1] = Tensor::zeros(&[3]);
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        adam.step(&mut params, &grad_refs).map_err(|e| match e {
            crate::autodiff::AutodiffError::NanGradient { .. } => RefineError::Nan {
                iteration: iter,
                breakdown: out.breakdown,
            },
            other => RefineError::Autodiff(other),
        })?;

        pose.extrinsics.translation =
            Vector3::new(params[0].data()[0], params[0].data()[1], params[0].data()[2]);
        let inc = Vector3::new(params[1].data()[0], params[1].data()[1], params[1].data()[2]);
        pose.extrinsics.rotate_by(&inc);
        if stage2 {
            for (slot, v) in pose.intrinsics.theta.iter_mut().zip(params[2].data()) {
                *slot = *v;
            }
        }
    }
    Ok((best_pose, trace))
}

/// Stage 1: 700 Adam iterations on the extrinsics only, objective
/// `w_contact L_contact + w_cmap L_cmap`. Intrinsics come back bit-identical.
pub fn stage1(initial: &HandPose, ctx: &RefineContext) -> Result<(HandPose, Vec<LossBreakdown>), RefineError> {
    if !initial.is_finite() {
        return Err(RefineError::InvalidInput("non-finite initial pose".into()));
    }
    let (pose, trace) = run_stage(ctx, initial, false)?;
    debug_assert_eq!(pose.intrinsics, initial.intrinsics);
    Ok((pose, trace))
}

/// Stage 2: 700 Adam iterations on all 22 parameters under the full
/// objective; returns the best iterate (lowest recorded total), not the
/// last one.
pub fn stage2(
    pose: &HandPose,
    ctx: &RefineContext,
) -> Result<(HandPose, Vec<LossBreakdown>), RefineError> {
    if !pose.is_finite() {
        return Err(RefineError::InvalidInput("non-finite initial pose".into()));
    }
    run_stage(ctx, pose, true)
}

/// Full refinement report: both traces plus before/after metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    pub initial_metrics: GraspReport,
    pub final_metrics: GraspReport,
    pub stage1_initial_total: f64,
    pub stage1_best_total: f64,
    pub stage2_initial_total: f64,
    pub stage2_best_total: f64,
    #[serde(skip)]
    pub stage1_trace: Vec<LossBreakdown>,
    #[serde(skip)]
    pub stage2_trace: Vec<LossBreakdown>,
}

/// Runs stage 1 then stage 2 and evaluates the metrics before and after.
pub fn refine(
    initial: &HandPose,
    prior: &GraspPrior,
    object: &ObjectModel,
    hand_model: &HandModel,
    cfg: RefineConfig,
    gt_part_id: u8,
) -> Result<(HandPose, RefineReport), RefineError> {
    let ctx = RefineContext::new(hand_model, prior, object, cfg)?;
    let initial_metrics = evaluate_metrics(hand_model, initial, object, gt_part_id)?;
    let (mid, stage1_trace) = stage1(initial, &ctx)?;
    let (final_pose, stage2_trace) = stage2(&mid, &ctx)?;
    let final_metrics = evaluate_metrics(hand_model, &final_pose, object, gt_part_id)?;
    let best1 = stage1_trace.iter().map(|b| b.total).fold(f64::INFINITY, f64::min);
    let best2 = stage2_trace.iter().map(|b| b.total).fold(f64::INFINITY, f64::min);
    let report = RefineReport {
        initial_metrics,
        final_metrics,
        stage1_initial_total: stage1_trace.first().map(|b| b.total).unwrap_or(0.0),
        stage1_best_total: best1,
        stage2_initial_total: stage2_trace.first().map(|b| b.total).unwrap_or(0.0),
        stage2_best_total: best2,
        stage1_trace,
        stage2_trace,
    };
    Ok((final_pose, report))
}

/// The four evaluation metrics for one posed hand.
pub fn evaluate_metrics(
    hand_model: &HandModel,
    pose: &HandPose,
    object: &ObjectModel,
    gt_part_id: u8,
) -> Result<GraspReport, RefineError> {
    let fk = forward_kinematics(hand_model, pose);
    let hand_tri = fk.mesh.to_tri_mesh(hand_model);
    let volume = solid_intersection_volume(&hand_tri, &object.mesh, 0.002)
        .map_err(|e| RefineError::InvalidInput(e.to_string()))?;
    let pen = penetration_depth(&fk.mesh, &object.mesh);
    let collider = fk.collider(hand_model);
    let sim = simulation_displacement(
        Some(&collider),
        &object.mesh,
        &object.surface.points,
        None,
        &SimConfig::default(),
    )
    .map_err(|e| RefineError::InvalidInput(e.to_string()))?;
    let (part_contact, fraction) = part_accuracy(&fk.mesh, object, gt_part_id, 0.005);
    Ok(GraspReport {
        solid_intersection_volume_cm3: volume,
        penetration_depth_cm: pen,
        simulation_displacement_cm: sim.displacement_cm,
        sim_escaped: sim.escaped,
        part_contact,
        part_contact_fraction: fraction,
    })
}
