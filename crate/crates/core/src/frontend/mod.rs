//! Instruction analysis: maps (object metadata, task instruction) to a
//! grasp directive — affordance type plus contact part name — via an
//! external multimodal language model endpoint or a deterministic offline
//! ruleset, then grounds the part name into geometry using the object's
//! segmentation.

mod localize;
mod offline;
mod remote;

pub use localize::localize_part;
pub use offline::{analyze_instruction_offline, Ruleset};
pub use remote::{analyze_instruction_remote, RemoteConfig, PROMPT_TEMPLATE};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AffordanceType;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("transport error talking to {endpoint}: {detail}")]
    Transport { endpoint: String, detail: String },
    #[error("protocol error: {detail}; raw reply: {raw}")]
    Protocol { detail: String, raw: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("instruction not analyzable: {0:?}")]
    Unanalyzable(String),
    #[error("part {requested:?} not found; available parts: {available:?}")]
    PartNotFound {
        requested: String,
        available: Vec<String>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A natural-language task command, optionally with a rendered image path
/// for multimodal endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskInstruction {
    pub text: String,
    pub image_path: Option<String>,
}

impl TaskInstruction {
    pub fn new(text: impl Into<String>) -> Result<Self, FrontendError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(FrontendError::InvalidInput(
                "instruction text is empty".into(),
            ));
        }
        Ok(Self {
            text,
            image_path: None,
        })
    }
}

/// The analyzed grasp arrangement: which interaction, on which named part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspDirective {
    pub affordance: AffordanceType,
    pub part_name: String,
}

impl GraspDirective {
    pub fn new(affordance: AffordanceType, part_name: impl Into<String>) -> Result<Self, FrontendError> {
        let part_name = part_name.into();
        if part_name.trim().is_empty() {
            return Err(FrontendError::Validation("empty part name".into()));
        }
        Ok(Self {
            affordance,
            part_name,
        })
    }
}
