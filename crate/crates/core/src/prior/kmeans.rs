//! Per-affordance k-means over (sorted OBB extents, intrinsics) features.
//!
//! Clustering runs independently per affordance type — the infinite
//! cross-type dissimilarity forbids mixing, so the split is structural and
//! no infinity ever enters the arithmetic. Within a type the feature space
//! is the concatenated 19-dim vector; assignment and inertia use the
//! squared Euclidean metric, for which the mean update is exactly optimal
//! (Lloyd's inertia is then monotonically non-increasing).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{AffordanceType, Dataset, AFFORDANCE_TYPES};
use crate::geom::ObbSize;
use crate::hand::HandIntrinsics;

use super::dissim::GraspFeature;
use super::PriorError;

const MAX_ITERS: usize = 200;
const REL_INERTIA_EPS: f64 = 1e-6;

/// One cluster of grasp instances sharing an affordance type.
#[derive(Debug, Clone)]
pub struct GraspCluster {
    pub id: usize,
    pub affordance: AffordanceType,
    /// Sorted member instance ids.
    pub member_ids: Vec<usize>,
    pub centroid_obb: ObbSize,
    pub centroid_theta: HandIntrinsics,
    /// Member whose intrinsics are nearest the cluster's mean intrinsics
    /// (ties break to the lowest instance id).
    pub representative_id: usize,
}

/// Clusters the whole dataset, `k_per_type` clusters per affordance type.
/// Deterministic for a fixed seed.
pub fn cluster_dataset(
    dataset: &Dataset,
    k_per_type: usize,
    seed: u64,
) -> Result<Vec<GraspCluster>, PriorError> {
    if k_per_type == 0 {
        return Err(PriorError::Config("k_per_type must be >= 1".into()));
    }
    let mut features = Vec::with_capacity(dataset.instances.len());
    for inst in &dataset.instances {
        features.push(GraspFeature::of(inst, dataset)?);
    }
    let mut clusters = Vec::new();
    for (ti, &aff) in AFFORDANCE_TYPES.iter().enumerate() {
        let typed: Vec<&GraspFeature> = features.iter().filter(|f| f.affordance == aff).collect();
        if typed.is_empty() {
            continue;
        }
        if typed.len() < k_per_type {
            return Err(PriorError::Config(format!(
                "affordance {aff} has {} instances, need at least {k_per_type}",
                typed.len()
            )));
        }
        let points: Vec<[f64; 19]> = typed.iter().map(|f| f.vector()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(ti as u64 + 1)));
        let (assign, centroids, _inertia) = kmeans(&points, k_per_type, &mut rng);
        for (c, centroid) in centroids.iter().enumerate() {
            let mut member_ids: Vec<usize> = assign
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == c)
                .map(|(i, _)| typed[i].instance_id)
                .collect();
            member_ids.sort_unstable();
            let mut obb = [0.0; 3];
            obb.copy_from_slice(&centroid[..3]);
            let mut theta = [0.0; 16];
            theta.copy_from_slice(&centroid[3..]);
            let centroid_theta = HandIntrinsics { theta };
            let representative_id = representative_of(&member_ids, &features, &centroid_theta);
            clusters.push(GraspCluster {
                id: clusters.len(),
                affordance: aff,
                member_ids,
                centroid_obb: ObbSize::new(obb),
                centroid_theta,
                representative_id,
            });
        }
    }
    Ok(clusters)
}

/// Member minimizing the intrinsics distance to the mean; lowest id on ties.
fn representative_of(
    member_ids: &[usize],
    features: &[GraspFeature],
    mean_theta: &HandIntrinsics,
) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &id in member_ids {
        let f = features
            .iter()
            .find(|f| f.instance_id == id)
            .expect("member feature exists");
        let d = f.intrinsics.distance(mean_theta);
        if d < best.0 || (d == best.0 && id < best.1) {
            best = (d, id);
        }
    }
    best.1
}

fn dist2(a: &[f64; 19], b: &[f64; 19]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Returns assignments, centroids
/// and the per-iteration inertia trace (used by the monotonicity tests).
pub(crate) fn kmeans(
    points: &[[f64; 19]],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<[f64; 19]>, Vec<f64>) {
    assert!(k >= 1 && points.len() >= k);
    // k-means++ seeding
    let mut centroids: Vec<[f64; 19]> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    while centroids.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| dist2(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[next]);
    }

    let mut assign = vec![0usize; points.len()];
    let mut inertia_trace = Vec::new();
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        // assignment (ties to the lower cluster index)
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dist2(p, centroid);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assign[i] = best.1;
            inertia += best.0;
        }
        inertia_trace.push(inertia);

        // update
        let mut sums = vec![[0.0f64; 19]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for d in 0..19 {
                sums[assign[i]][d] += p[d];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // empty-cluster repair: re-seed from the point farthest
                // from its assigned centroid
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = dist2(&points[a], &centroids[assign[a]]);
                        let db = dist2(&points[b], &centroids[assign[b]]);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                centroids[c] = points[far];
            } else {
                for d in 0..19 {
                    centroids[c][d] = sums[c][d] / counts[c] as f64;
                }
            }
        }

        if prev_inertia.is_finite() {
            let rel = if prev_inertia > 0.0 {
                (prev_inertia - inertia) / prev_inertia
            } else {
                0.0
            };
            if rel < REL_INERTIA_EPS {
                break;
            }
        }
        prev_inertia = inertia;
    }
    // final assignment against the last centroids
    for (i, p) in points.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = dist2(p, centroid);
            if d < best.0 {
                best = (d, c);
            }
        }
        assign[i] = best.1;
    }
    (assign, centroids, inertia_trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouped_points(groups: &[[f64; 19]], per_group: usize, spread: f64) -> Vec<[f64; 19]> {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let mut out = Vec::new();
        for g in groups {
            for _ in 0..per_group {
                let mut p = *g;
                for v in &mut p {
                    *v += (rng.gen::<f64>() - 0.5) * spread;
                }
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn recovers_separated_groups() {
        let mut g0 = [0.0; 19];
        let mut g1 = [0.0; 19];
        let mut g2 = [0.0; 19];
        g1[5] = 10.0;
        g2[9] = -10.0;
        g0[3] = 5.0;
        let points = grouped_points(&[g0, g1, g2], 4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (assign, _, _) = kmeans(&points, 3, &mut rng);
        for g in 0..3 {
            let first = assign[g * 4];
            for i in 0..4 {
                assert_eq!(assign[g * 4 + i], first, "group {g} split");
            }
        }
        let mut labels: Vec<usize> = assign.clone();
        labels.dedup();
        assert_eq!(labels.len(), 3);
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng_data = ChaCha8Rng::seed_from_u64(55);
        for trial in 0..10 {
            let points: Vec<[f64; 19]> = (0..40)
                .map(|_| {
                    let mut p = [0.0; 19];
                    for v in &mut p {
                        *v = rng_data.gen::<f64>() * 4.0 - 2.0;
                    }
                    p
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let (_, _, trace) = kmeans(&points, 5, &mut rng);
            for w in trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9 * w[0].abs(),
                    "inertia increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let points = grouped_points(&[[0.0; 19], [1.0; 19]], 6, 0.3);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            kmeans(&points, 2, &mut rng).0
        };
        assert_eq!(run(3), run(3));
    }
}
