//! Simplified parametric articulated hand: 16 intrinsic joint angles and a
//! differentiable pose-to-mesh forward map.
//!
//! The geometry is a palm box plus five three-segment capsule fingers with
//! the same parameter interface as a 16-DoF anthropomorphic hand. Contact
//! maps stay meaningful because the vertex count is fixed (~416) and vertex
//! ids are stable across poses.

mod fk;
mod model;
mod spen;
mod types;

pub use fk::{
    forward_kinematics, joint_affects_link, FkResult, HandCollider, HandMesh, PARAM_COUNT,
};
pub use model::{
    FingerSpec, HandModel, HandModelSpec, FINGER_COUNT, LINK_COUNT, OPPOSITION_JOINT,
    SEGMENTS_PER_FINGER,
};
pub use spen::{link_sphere_centers, self_penetration, self_penetration_scaled};
pub use types::{
    joint_limit_excess, HandExtrinsics, HandIntrinsics, HandPose, JointLimits, JOINT_COUNT,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("hand model error: {0}")]
    Model(String),
}
