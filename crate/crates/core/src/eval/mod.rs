//! The four quantitative grasp metrics: solid intersection volume,
//! penetration depth, simulation displacement (miniature rigid-body
//! simulation), and part accuracy.
//!
//! The simulator is self-contained penalty-contact integration, so
//! displacement numbers are comparable only within this project, not
//! against results from external physics engines.

mod part_acc;
mod penetration;
mod report;
mod sim;
mod volume;

pub use part_acc::part_accuracy;
pub use penetration::penetration_depth;
pub use report::{write_batch_csv, write_batch_json, BatchReport, GraspReport};
pub use sim::{mass_properties, simulation_displacement, SimConfig, SimOutcome};
pub use volume::{solid_intersection_volume, DEFAULT_VOXEL};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Geom(#[from] crate::geom::GeomError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
