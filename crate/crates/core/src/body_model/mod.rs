//! Parametric whole-body model: shaped template, regressed joints, kinematic
//! chain and linear blend skinning. Units are millimeters throughout.

pub mod file;
pub mod layout;
mod model;
pub mod rotation;
pub mod toy;
mod tree;

use thiserror::Error;

pub use file::{load_model, model_from_json, model_to_json, write_model};
pub use model::{BodyModelDef, FullPose, KeypointSource, ModelArrays, WEIGHT_SUM_TOLERANCE};
pub use rotation::{canonical_axis_angle, log_rotation, rodrigues};
pub use toy::{toy_model, ToyModelConfig};
pub use tree::{forward_kinematics, KinematicTree, RigidTransform, SMPLX_PARENTS};

#[derive(Debug, Error)]
pub enum BodyModelError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("malformed kinematic tree: {0}")]
    MalformedTree(String),
    #[error("invalid {what} row {row}: {detail}")]
    InvalidWeights {
        what: &'static str,
        row: usize,
        detail: String,
    },
    #[error("invalid part mask '{name}': {reason}")]
    InvalidMask { name: String, reason: String },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("invalid model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model array container: {0}")]
    Container(#[from] crate::io::ContainerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BodyModelError {
    pub fn is_io(&self) -> bool {
        match self {
            BodyModelError::Io(_) => true,
            BodyModelError::Container(c) => c.is_io(),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests;
