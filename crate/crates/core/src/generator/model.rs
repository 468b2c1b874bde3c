//! CVAE parameters and the tape-level forward passes shared between
//! training (weights as tracked parameters) and inference (weights as
//! constants).

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{load_checkpoint, save_checkpoint, Tape, Tensor, Var};

use super::condition::CondInputs;
use super::GeneratorError;

/// Condition vector width: four 128-dim sub-features.
pub const COND_DIM: usize = 512;
pub const LATENT_DIM: usize = 64;
const HIDDEN: usize = 256;
const POINT_HIDDEN: usize = 64;
const FEAT: usize = 128;
/// Per-point input: normalized position, normal, scaling factor.
const POINT_IN: usize = 7;
/// Extrinsics as seen by the encoder: translation + 6-D rotation.
const EXT_DIM: usize = 9;

/// The generation network: a point encoder, three linear condition
/// encoders, and encoder/decoder MLPs.
#[derive(Debug, Clone)]
pub struct CvaeModel {
    pub n_clusters: usize,
    pub params: Vec<(String, Tensor)>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit)
            .collect(),
    )
    .unwrap()
}

impl CvaeModel {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<(String, Tensor)> = Vec::new();
        let lin = |name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng, params: &mut Vec<(String, Tensor)>| {
            params.push((format!("{name}_w"), xavier(rng, rows, cols)));
            params.push((format!("{name}_b"), Tensor::zeros(&[cols])));
        };
        lin("pe1", POINT_IN, POINT_HIDDEN, &mut rng, &mut params);
        lin("pe2", POINT_HIDDEN, FEAT, &mut rng, &mut params);
        lin("size", 3, FEAT, &mut rng, &mut params);
        lin("onehot", n_clusters, FEAT, &mut rng, &mut params);
        lin("centroid", 3, FEAT, &mut rng, &mut params);
        lin("enc1", COND_DIM + EXT_DIM, HIDDEN, &mut rng, &mut params);
        lin("enc2", HIDDEN, HIDDEN, &mut rng, &mut params);
        lin("mu", HIDDEN, LATENT_DIM, &mut rng, &mut params);
        lin("logvar", HIDDEN, LATENT_DIM, &mut rng, &mut params);
        lin("dec1", LATENT_DIM + COND_DIM, HIDDEN, &mut rng, &mut params);
        lin("dec2", HIDDEN, HIDDEN, &mut rng, &mut params);
        lin("out", HIDDEN, EXT_DIM, &mut rng, &mut params);
        // start the decoded rotation near identity: r6 = (1,0,0, 0,1,0)
        let out_b = params
            .iter_mut()
            .find(|(n, _)| n == "out_b")
            .expect("out bias exists");
        out_b.1.data_mut()[3] = 1.0;
        out_b.1.data_mut()[7] = 1.0;
        CvaeModel { n_clusters, params }
    }

    pub fn save(&self, path: &Path) -> Result<(), GeneratorError> {
        let mut entries = vec![(
            "n_clusters".to_string(),
            Tensor::scalar(self.n_clusters as f64),
        )];
        entries.extend(self.params.iter().cloned());
        save_checkpoint(path, &entries)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GeneratorError> {
        let entries = load_checkpoint(path)?;
        let n_clusters = entries
            .iter()
            .find(|(n, _)| n == "n_clusters")
            .map(|(_, t)| t.item() as usize)
            .ok_or_else(|| GeneratorError::InvalidInput("checkpoint missing n_clusters".into()))?;
        let params = entries.into_iter().filter(|(n, _)| n != "n_clusters").collect();
        Ok(CvaeModel { n_clusters, params })
    }

    /// Registers every parameter on the tape, tracked or constant.
    pub fn register(&self, tape: &mut Tape, tracked: bool) -> HashMap<String, Var> {
        self.params
            .iter()
            .map(|(name, t)| {
                let v = if tracked {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect()
    }
}

fn linear(tape: &mut Tape, vars: &HashMap<String, Var>, name: &str, x: Var) -> Var {
    let w = vars[&format!("{name}_w")];
    let b = vars[&format!("{name}_b")];
    let y = tape.matmul(x, w).unwrap();
    tape.add(y, b).unwrap()
}

/// Condition forward: per-point MLP + column max-pool for the part cloud,
/// linear layers for size / one-hot / centroid, concatenated to 512.
pub fn condition_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    inputs: &CondInputs,
) -> Var {
    let pts = tape.constant(inputs.points7.clone());
    let h = linear(tape, vars, "pe1", pts);
    let h = tape.relu(h).unwrap();
    let h = linear(tape, vars, "pe2", h);
    let h = tape.relu(h).unwrap();
    let part_feat = tape.max_axis0(h).unwrap();

    let size = tape.constant(inputs.size.clone());
    let size_feat = linear(tape, vars, "size", size);
    let onehot = tape.constant(inputs.onehot.clone());
    let onehot_feat = linear(tape, vars, "onehot", onehot);
    let centroid = tape.constant(inputs.centroid.clone());
    let centroid_feat = linear(tape, vars, "centroid", centroid);

    tape.concat(&[part_feat, size_feat, onehot_feat, centroid_feat])
        .unwrap()
}

/// Encoder: (condition, ground-truth extrinsics) -> (mu, logvar).
pub fn encoder_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    cond: Var,
    ext: Var,
) -> (Var, Var) {
    let x = tape.concat(&[cond, ext]).unwrap();
    let h = linear(tape, vars, "enc1", x);
    let h = tape.relu(h).unwrap();
    let h = linear(tape, vars, "enc2", h);
    let h = tape.relu(h).unwrap();
    let mu = linear(tape, vars, "mu", h);
    let logvar = linear(tape, vars, "logvar", h);
    (mu, logvar)
}

/// Decoder: (z, condition) -> (translation, transposed rotation matrix).
/// The 6-D rotation output is orthonormalized by Gram-Schmidt on the tape,
/// so decoded rotations are exactly orthonormal and the whole map stays
/// differentiable.
pub fn decoder_forward(
    tape: &mut Tape,
    vars: &HashMap<String, Var>,
    z: Var,
    cond: Var,
) -> (Var, Var) {
    let x = tape.concat(&[z, cond]).unwrap();
    let h = linear(tape, vars, "dec1", x);
    let h = tape.relu(h).unwrap();
    let h = linear(tape, vars, "dec2", h);
    let h = tape.relu(h).unwrap();
    let o = linear(tape, vars, "out", h);
    let t_hat = tape.slice(o, 0, 3).unwrap();
    let a1 = tape.slice(o, 3, 3).unwrap();
    let a2 = tape.slice(o, 6, 3).unwrap();
    // Gram-Schmidt: the rows of rt are the columns of the rotation matrix
    let n1 = tape.row_norm(a1).unwrap();
    let b1 = tape.div(a1, n1).unwrap();
    let dot = {
        let m = tape.mul(b1, a2).unwrap();
        tape.sum_reduce(m).unwrap()
    };
    let proj = tape.mul(b1, dot).unwrap();
    let u2 = tape.sub(a2, proj).unwrap();
    let n2 = tape.row_norm(u2).unwrap();
    let b2 = tape.div(u2, n2).unwrap();
    let b3 = tape.row_cross(b1, b2).unwrap();
    let r1 = tape.reshape(b1, vec![1, 3]).unwrap();
    let r2 = tape.reshape(b2, vec![1, 3]).unwrap();
    let r3 = tape.reshape(b3, vec![1, 3]).unwrap();
    let rt = tape.concat(&[r1, r2, r3]).unwrap();
    (t_hat, rt)
}
