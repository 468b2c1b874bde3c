//! CVAE training: per-element tapes with summed gradients, Adam updates,
//! and a full per-term loss history.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::rc::Rc;

use nalgebra::Point3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{AdamState, Tape, Tensor, Var};
use crate::dataset::Dataset;
use crate::geom::NnIndex;
use crate::hand::{forward_kinematics, HandModel, HandPose};
use crate::prior::ClusterStore;

use super::condition::{condition_inputs, CondInputs};
use super::model::{condition_forward, decoder_forward, encoder_forward, CvaeModel, LATENT_DIM};
use super::GeneratorError;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda_v: f64,
    pub lambda_r: f64,
    pub lambda_t: f64,
    pub lambda_kld: f64,
    pub lambda_pen: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub c_pen: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_v: 100.0,
            lambda_r: 5.0,
            lambda_t: 30.0,
            lambda_kld: 10.0,
            lambda_pen: 1.0,
            lr: 1e-3,
            epochs: 400,
            batch_size: 16,
            c_pen: 0.005,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EpochStats {
    pub kld: f64,
    pub vertex: f64,
    pub rotation: f64,
    pub translation: f64,
    pub penetration: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), GeneratorError> {
        let mut out = String::from("epoch,kld,vertex,rotation,translation,penetration,total\n");
        for (i, e) in self.epochs.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                i, e.kld, e.vertex, e.rotation, e.translation, e.penetration, e.total
            )
            .unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Everything constant about one training element, precomputed once.
pub(crate) struct TrainItem {
    inputs: CondInputs,
    /// Ground-truth translation in the part-centered frame.
    t_rel: Tensor,
    /// Ground-truth transposed rotation (rows = columns of R).
    rt: Tensor,
    /// Encoder view of the extrinsics: [t_rel, first two columns of R].
    ext: Tensor,
    /// Rest-frame hand vertices at the instance's own intrinsics, (N, 3).
    v_local: Tensor,
    /// Object surface points in the part-centered frame, with normals.
    obj_points: Vec<Point3<f64>>,
    obj_normals: Vec<nalgebra::Vector3<f64>>,
}

fn prepare_item(
    dataset: &Dataset,
    store: &ClusterStore,
    instance_id: usize,
    n_clusters: usize,
    model: &HandModel,
) -> Result<TrainItem, GeneratorError> {
    let inst = dataset.instance(instance_id)?;
    let object = dataset.object(&inst.object_id)?;
    let part = dataset.instance_part_cloud(inst)?;
    let cluster_id = store
        .clusters
        .iter()
        .find(|c| c.member_ids.contains(&instance_id))
        .map(|c| c.id)
        .ok_or_else(|| {
            GeneratorError::InvalidInput(format!(
                "instance {instance_id} is not assigned to any cluster"
            ))
        })?;
    let inputs = condition_inputs(&part, cluster_id, n_clusters, object)?;

    let r = inst.pose.extrinsics.rotation_matrix();
    let t_rel_v = inst.pose.extrinsics.translation - inputs.part_centroid.coords;
    let t_rel = Tensor::vector(vec![t_rel_v.x, t_rel_v.y, t_rel_v.z]);
    // rows of rt are columns of R
    let rt = Tensor::matrix(
        3,
        3,
        vec![
            r[(0, 0)], r[(1, 0)], r[(2, 0)],
            r[(0, 1)], r[(1, 1)], r[(2, 1)],
            r[(0, 2)], r[(1, 2)], r[(2, 2)],
        ],
    )
    .unwrap();
    let ext = Tensor::vector(vec![
        t_rel_v.x, t_rel_v.y, t_rel_v.z,
        r[(0, 0)], r[(1, 0)], r[(2, 0)],
        r[(0, 1)], r[(1, 1)], r[(2, 1)],
    ]);

    // hand vertices at the instance intrinsics, identity extrinsics
    let canonical = HandPose {
        extrinsics: crate::hand::HandExtrinsics::identity(),
        intrinsics: inst.pose.intrinsics.clone(),
    };
    let fk = forward_kinematics(model, &canonical);
    let mut vdata = Vec::with_capacity(fk.mesh.len() * 3);
    for v in &fk.mesh.vertices {
        vdata.extend_from_slice(&[v.x, v.y, v.z]);
    }
    let v_local = Tensor::new(vec![fk.mesh.len(), 3], vdata).unwrap();

    let obj_points = object
        .surface
        .points
        .iter()
        .map(|p| Point3::from(p - inputs.part_centroid))
        .collect();
    let obj_normals = object.surface.normals.clone();

    Ok(TrainItem {
        inputs,
        t_rel,
        rt,
        ext,
        v_local,
        obj_points,
        obj_normals,
    })
}

struct ElementLoss {
    total: Var,
    kld: f64,
    vertex: f64,
    rotation: f64,
    translation: f64,
    penetration: f64,
}

/// Forward + loss for one element on its own tape. `eps` is the
/// reparameterization noise; passing it in keeps the loss a pure function
/// of (weights, item, eps), which the finite-difference checks rely on.
fn element_loss(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    item: &TrainItem,
    eps: &Tensor,
    cfg: &TrainConfig,
) -> Result<ElementLoss, GeneratorError> {
    let cond = condition_forward(tape, vars, &item.inputs);
    let ext = tape.constant(item.ext.clone());
    let (mu, logvar) = encoder_forward(tape, vars, cond, ext);

    // z = mu + eps * exp(logvar / 2)
    let half_logvar = tape.scale(logvar, 0.5)?;
    let std = tape.exp(half_logvar)?;
    let eps_v = tape.constant(eps.clone());
    let noise = tape.mul(eps_v, std)?;
    let z = tape.add(mu, noise)?;

    let (t_hat, rt_hat) = decoder_forward(tape, vars, z, cond);

    // KLD(q || N(0, I)) = -1/2 sum(1 + logvar - mu^2 - exp(logvar))
    let mu2 = tape.square(mu)?;
    let var = tape.exp(logvar)?;
    let inner = {
        let a = tape.add_scalar(logvar, 1.0)?;
        let b = tape.sub(a, mu2)?;
        tape.sub(b, var)?
    };
    let kld = {
        let s = tape.sum_reduce(inner)?;
        tape.scale(s, -0.5)?
    };

    // reconstruction terms, mean-square per term
    let t_gt = tape.constant(item.t_rel.clone());
    let t_loss = {
        let d = tape.sub(t_hat, t_gt)?;
        let sq = tape.square(d)?;
        tape.mean_reduce(sq)?
    };
    let rt_gt = tape.constant(item.rt.clone());
    let r_loss = {
        let d = tape.sub(rt_hat, rt_gt)?;
        let sq = tape.square(d)?;
        tape.mean_reduce(sq)?
    };
    // predicted vertices: V = v_local R^T + t
    let v_local = tape.constant(item.v_local.clone());
    let v_rot = tape.matmul(v_local, rt_hat)?;
    let v_hat = tape.add(v_rot, t_hat)?;
    let v_gt_rot = tape.matmul(v_local, rt_gt)?;
    let v_gt = tape.add(v_gt_rot, t_gt)?;
    let v_loss = {
        let d = tape.sub(v_hat, v_gt)?;
        let sq = tape.square(d)?;
        tape.mean_reduce(sq)?
    };

    // penetration: nearest predicted hand vertex per object point, frozen
    // correspondences per step
    let pen = if cfg.lambda_pen != 0.0 {
        let v_vals = tape.value(v_hat);
        let verts: Vec<Point3<f64>> = v_vals
            .data()
            .chunks(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let hand_index = NnIndex::build(&verts);
        let mut idxs = Vec::new();
        let mut odata = Vec::new();
        let mut ndata = Vec::new();
        for (o, n) in item.obj_points.iter().zip(&item.obj_normals) {
            let (d, vi) = hand_index.nearest(o).expect("hand nonempty");
            if d > super::pen::PEN_DISTANCE_GATE {
                continue;
            }
            idxs.push(vi);
            odata.extend_from_slice(&[o.x, o.y, o.z]);
            ndata.extend_from_slice(&[n.x, n.y, n.z]);
        }
        let m = idxs.len();
        if m == 0 {
            None
        } else {
            let gathered = tape.gather_rows(v_hat, Rc::new(idxs))?;
            let o_const = tape.constant(Tensor::new(vec![m, 3], odata).unwrap());
            let n_const = tape.constant(Tensor::new(vec![m, 3], ndata).unwrap());
            let diff = tape.sub(o_const, gathered)?;
            let dot = {
                let p = tape.mul(diff, n_const)?;
                tape.sum_axis1(p)?
            };
            let hinge = {
                let s = tape.add_scalar(dot, -cfg.c_pen)?;
                tape.relu(s)?
            };
            Some(tape.sum_reduce(hinge)?)
        }
    } else {
        None
    };

    // weighted total
    let mut total = tape.scale(kld, cfg.lambda_kld)?;
    let wv = tape.scale(v_loss, cfg.lambda_v)?;
    total = tape.add(total, wv)?;
    let wr = tape.scale(r_loss, cfg.lambda_r)?;
    total = tape.add(total, wr)?;
    let wt = tape.scale(t_loss, cfg.lambda_t)?;
    total = tape.add(total, wt)?;
    if let Some(p) = pen {
        let wp = tape.scale(p, cfg.lambda_pen)?;
        total = tape.add(total, wp)?;
        return Ok(ElementLoss {
            total,
            kld: tape.value(kld).item(),
            vertex: tape.value(v_loss).item(),
            rotation: tape.value(r_loss).item(),
            translation: tape.value(t_loss).item(),
            penetration: tape.value(p).item(),
        });
    }
    Ok(ElementLoss {
        total,
        kld: tape.value(kld).item(),
        vertex: tape.value(v_loss).item(),
        rotation: tape.value(r_loss).item(),
        translation: tape.value(t_loss).item(),
        penetration: 0.0,
    })
}

/// Gradients and loss values of one element; used for batch accumulation.
pub(crate) struct ElementResult {
    pub grads: Vec<Tensor>,
    pub stats: EpochStats,
}

pub(crate) fn element_pass(
    model: &CvaeModel,
    item: &TrainItem,
    eps: &Tensor,
    cfg: &TrainConfig,
) -> Result<ElementResult, GeneratorError> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let el = element_loss(&mut tape, &vars, item, eps, cfg)?;
    let total_val = tape.value(el.total).item();
    if !total_val.is_finite() {
        return Err(GeneratorError::NanLoss { epoch: 0, batch: 0 });
    }
    let grads = tape.backward(el.total)?;
    let ordered: Vec<Tensor> = model
        .params
        .iter()
        .map(|(name, t)| {
            grads
                .get(vars[name])
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();
    Ok(ElementResult {
        grads: ordered,
        stats: EpochStats {
            kld: el.kld,
            vertex: el.vertex,
            rotation: el.rotation,
            translation: el.translation,
            penetration: el.penetration,
            total: total_val,
        },
    })
}

/// Trains the model on the given instances. Deterministic per
/// (seed, dataset, config): batch order, reparameterization noise, and
/// gradient summation order are all fixed.
pub fn train(
    model: &mut CvaeModel,
    dataset: &Dataset,
    store: &ClusterStore,
    instance_ids: &[usize],
    hand: &HandModel,
    cfg: &TrainConfig,
) -> Result<TrainHistory, GeneratorError> {
    if instance_ids.is_empty() {
        return Err(GeneratorError::InvalidInput("no training instances".into()));
    }
    let items: Vec<TrainItem> = instance_ids
        .iter()
        .map(|&id| prepare_item(dataset, store, id, model.n_clusters, hand))
        .collect::<Result<_, _>>()?;

    let mut params: Vec<Tensor> = model.params.iter().map(|(_, t)| t.clone()).collect();
    let mut adam = AdamState::for_params(cfg.lr, &params);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa5a5_a5a5);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_stats = EpochStats::default();
        let mut batches = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            // write current params back into the model for the workers
            for (slot, p) in model.params.iter_mut().zip(&params) {
                slot.1 = p.clone();
            }
            let snapshot = &*model;
            let results: Vec<Result<ElementResult, GeneratorError>> =
                crate::exec::map_indexed(batch.len(), |bi| {
                    let item = &items[batch[bi]];
                    let mut eps42 = ChaCha8Rng::seed_from_u64(
                        cfg.seed
                            ^ ((epoch as u64) << 40)
                            ^ ((batch_idx as u64) << 20)
                            ^ bi as u64,
                    );
                    let eps = Tensor::vector(
                        (0..LATENT_DIM)
                            .map(|_| eps42.sample::<f64, _>(StandardNormal))
                            .collect(),
                    );
                    element_pass(snapshot, item, &eps, cfg)
                });
            let mut grad_sum: Vec<Tensor> =
                model.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
            let mut batch_stats = EpochStats::default();
            for r in results {
                let r = r.map_err(|e| match e {
                    GeneratorError::NanLoss { .. } => GeneratorError::NanLoss {
                        epoch,
                        batch: batch_idx,
                    },
                    other => other,
                })?;
                for (acc, g) in grad_sum.iter_mut().zip(&r.grads) {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                batch_stats.kld += r.stats.kld;
                batch_stats.vertex += r.stats.vertex;
                batch_stats.rotation += r.stats.rotation;
                batch_stats.translation += r.stats.translation;
                batch_stats.penetration += r.stats.penetration;
                batch_stats.total += r.stats.total;
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad_sum {
                for x in g.data_mut() {
                    *x *= inv;
                }
            }
            let grad_refs: Vec<&Tensor> = grad_sum.iter().collect();
            adam.step(&mut params, &grad_refs).map_err(|e| match e {
                crate::autodiff::AutodiffError::NanGradient { .. } => GeneratorError::NanLoss {
                    epoch,
                    batch: batch_idx,
                },
                other => GeneratorError::Autodiff(other),
            })?;
            epoch_stats.kld += batch_stats.kld * inv;
            epoch_stats.vertex += batch_stats.vertex * inv;
            epoch_stats.rotation += batch_stats.rotation * inv;
            epoch_stats.translation += batch_stats.translation * inv;
            epoch_stats.penetration += batch_stats.penetration * inv;
            epoch_stats.total += batch_stats.total * inv;
            batches += 1;
        }
        let inv_b = 1.0 / batches.max(1) as f64;
        epoch_stats.kld *= inv_b;
        epoch_stats.vertex *= inv_b;
        epoch_stats.rotation *= inv_b;
        epoch_stats.translation *= inv_b;
        epoch_stats.penetration *= inv_b;
        epoch_stats.total *= inv_b;
        history.epochs.push(epoch_stats);
    }
    for (slot, p) in model.params.iter_mut().zip(&params) {
        slot.1 = p.clone();
    }
    Ok(history)
}
