//! Minimal reverse-mode automatic differentiation over dense f64 tensors,
//! plus the Adam optimizer and the binary checkpoint format. Powers both
//! the generative network's training and the grasp refinement loop.

mod adam;
mod checkpoint;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use tape::{CustomBackward, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("variable does not belong to this tape (op {op})")]
    WrongTape { op: &'static str },
    #[error("tape already consumed by backward; build a fresh forward pass")]
    TapeConsumed,
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("NaN gradient for parameter {param_index} at step {step}")]
    NanGradient { param_index: usize, step: u64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
