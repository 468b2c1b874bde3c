//! Part-aware grasping generation network: a conditional variational
//! auto-encoder predicting hand extrinsics from part-conditioned features.
//! Intrinsics are never predicted — retrieval supplies the representative
//! joint angles and the network only places the hand.

mod condition;
mod model;
mod pen;
mod sample;
mod train;

pub use condition::{condition_inputs, encode_condition, CondInputs, ConditionVector};
pub use model::{CvaeModel, COND_DIM, LATENT_DIM};
pub use pen::{pen_loss, PEN_DISTANCE_GATE};
pub use sample::sample_extrinsics;
pub use train::{train, EpochStats, TrainConfig, TrainHistory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("NaN loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
