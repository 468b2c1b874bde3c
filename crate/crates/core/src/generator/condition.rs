//! Condition inputs and the inference-time condition vector.

use nalgebra::{Point3, Vector3};

use crate::autodiff::{Tape, Tensor};
use crate::dataset::ObjectModel;
use crate::geom::PointCloud;

use super::model::{condition_forward, CvaeModel};
use super::GeneratorError;

/// Raw network inputs derived from a (part, cluster, object) triple.
#[derive(Debug, Clone)]
pub struct CondInputs {
    /// (P, 7): unit-sphere-normalized position, normal, scaling factor.
    pub points7: Tensor,
    /// Axis-aligned bounding box extents of the part (meters).
    pub size: Tensor,
    /// One-hot of the retrieved cluster.
    pub onehot: Tensor,
    /// Centroid of the rest of the object in the part-centered frame.
    pub centroid: Tensor,
    /// Center of the contact part in world coordinates.
    pub part_centroid: Point3<f64>,
    /// Radius the part cloud was normalized by.
    pub scale: f64,
}

/// Builds the network inputs. The part cloud is recentered on its centroid
/// and scaled into the unit sphere; each point carries its normal and the
/// scaling factor. The centroid of the remaining surface prevents the
/// predicted hand from overlapping the object bulk; when the part covers
/// the whole object it is zero by convention (a warning is emitted).
pub fn condition_inputs(
    part: &PointCloud,
    cluster_id: usize,
    n_clusters: usize,
    object: &ObjectModel,
) -> Result<CondInputs, GeneratorError> {
    if part.is_empty() {
        return Err(GeneratorError::InvalidInput("empty part cloud".into()));
    }
    if cluster_id >= n_clusters {
        return Err(GeneratorError::InvalidInput(format!(
            "cluster id {cluster_id} out of {n_clusters}"
        )));
    }
    // order-independent centroid: summing in sorted-coordinate order makes
    // the normalization (and so the encoder) exactly permutation invariant
    let c = {
        let mut order: Vec<usize> = (0..part.len()).collect();
        order.sort_unstable_by(|&a, &b| {
            let pa = &part.points[a];
            let pb = &part.points[b];
            (pa.x, pa.y, pa.z)
                .partial_cmp(&(pb.x, pb.y, pb.z))
                .unwrap()
        });
        let mut sum = Vector3::zeros();
        for &i in &order {
            sum += part.points[i].coords;
        }
        Point3::from(sum / part.len() as f64)
    };
    let r = part
        .points
        .iter()
        .map(|p| (p - c).norm())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut data = Vec::with_capacity(part.len() * 7);
    for (p, n) in part.points.iter().zip(&part.normals) {
        let q = (p - c) / r;
        data.extend_from_slice(&[q.x, q.y, q.z, n.x, n.y, n.z, r]);
    }
    let points7 = Tensor::new(vec![part.len(), 7], data).unwrap();

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &part.points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let size = Tensor::vector(vec![hi.x - lo.x, hi.y - lo.y, hi.z - lo.z]);

    let mut onehot = vec![0.0; n_clusters];
    onehot[cluster_id] = 1.0;

    // mean of the non-part surface points, expressed relative to the part
    let part_pts: std::collections::HashSet<_> = part
        .points
        .iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits()))
        .collect();
    let mut rest_sum = Vector3::zeros();
    let mut rest_n = 0usize;
    for p in &object.surface.points {
        if !part_pts.contains(&(p.x.to_bits(), p.y.to_bits(), p.z.to_bits())) {
            rest_sum += p.coords;
            rest_n += 1;
        }
    }
    let centroid = if rest_n == 0 {
        eprintln!("warning: contact part covers the whole object; rest-centroid set to zero");
        Vector3::zeros()
    } else {
        rest_sum / rest_n as f64 - c.coords
    };

    Ok(CondInputs {
        points7,
        size,
        onehot: Tensor::vector(onehot),
        centroid: Tensor::vector(vec![centroid.x, centroid.y, centroid.z]),
        part_centroid: c,
        scale: r,
    })
}

/// The four encoded 128-dim sub-features plus their concatenation,
/// evaluated with the current model weights.
#[derive(Debug, Clone)]
pub struct ConditionVector {
    pub part_feature: Vec<f64>,
    pub part_size_feature: Vec<f64>,
    pub cluster_onehot_feature: Vec<f64>,
    pub centroid_feature: Vec<f64>,
    pub concatenated: Vec<f64>,
    pub part_centroid: Point3<f64>,
    pub scale: f64,
}

pub fn encode_condition(
    model: &CvaeModel,
    part: &PointCloud,
    cluster_id: usize,
    object: &ObjectModel,
) -> Result<ConditionVector, GeneratorError> {
    let inputs = condition_inputs(part, cluster_id, model.n_clusters, object)?;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let cond = condition_forward(&mut tape, &vars, &inputs);
    let v = tape.value(cond).data().to_vec();
    Ok(ConditionVector {
        part_feature: v[0..128].to_vec(),
        part_size_feature: v[128..256].to_vec(),
        cluster_onehot_feature: v[256..384].to_vec(),
        centroid_feature: v[384..512].to_vec(),
        concatenated: v,
        part_centroid: inputs.part_centroid,
        scale: inputs.scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PartSegmentation;
    use crate::geom::{sample_surface, shapes};

    fn toy_object() -> ObjectModel {
        let mesh = shapes::box_mesh(&Vector3::new(0.03, 0.03, 0.03), 1);
        let surface = sample_surface(&mesh, 128, 5).unwrap();
        let labels: Vec<u8> = surface
            .points
            .iter()
            .map(|p| if p.z > 0.0 { 1 } else { 0 })
            .collect();
        ObjectModel {
            id: "toy".into(),
            mesh,
            surface,
            segmentation: PartSegmentation {
                point_part_ids: labels,
                part_names: vec!["lower".into(), "upper".into()],
            },
            scale: 1.0,
            sample_seed: 5,
        }
    }

    #[test]
    fn whole_object_part_gives_zero_centroid() {
        let obj = toy_object();
        let inputs = condition_inputs(&obj.surface, 0, 4, &obj).unwrap();
        assert_eq!(inputs.centroid.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn doubling_part_coordinates_doubles_the_scale_input() {
        let obj = toy_object();
        let part = obj.part_cloud(1);
        let inputs = condition_inputs(&part, 0, 4, &obj).unwrap();
        let doubled = PointCloud {
            points: part.points.iter().map(|p| Point3::from(p.coords * 2.0)).collect(),
            normals: part.normals.clone(),
        };
        let inputs2 = condition_inputs(&doubled, 0, 4, &obj).unwrap();
        assert!((inputs2.scale - 2.0 * inputs.scale).abs() < 1e-12);
        // normalized coordinates are unchanged
        for (a, b) in inputs.points7.data().chunks(7).zip(inputs2.points7.data().chunks(7)) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn part_feature_is_permutation_invariant() {
        let obj = toy_object();
        let part = obj.part_cloud(1);
        let mut reversed = part.clone();
        reversed.points.reverse();
        reversed.normals.reverse();
        let model = CvaeModel::new(4, 11);
        let a = encode_condition(&model, &part, 2, &obj).unwrap();
        let b = encode_condition(&model, &reversed, 2, &obj).unwrap();
        assert_eq!(a.part_feature, b.part_feature);
        assert_eq!(a.concatenated, b.concatenated);
    }

    #[test]
    fn out_of_range_cluster_is_rejected() {
        let obj = toy_object();
        assert!(condition_inputs(&obj.surface, 9, 4, &obj).is_err());
    }
}
