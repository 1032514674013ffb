//! Gendered-to-neutral shape adapter and the label supervision policy.
//!
//! The adapter is a small fully connected network mapping shape coefficients
//! of one body model to coefficients of another, fit so that both meshes agree
//! vertex-by-vertex across randomly sampled poses.

mod fit;
mod mlp;
mod policy;

use thiserror::Error;

pub use fit::{
    adapter_gradient, adapter_loss, fit_adapter, mesh_jacobian, AdapterSample, AdapterTrainConfig, FitReport,
    GaussianPoseSampler, Objective,
};
pub use mlp::{Activation, AdapterGradients, MlpAdapter};
pub use policy::{apply_label_policy, Annotation, LabelPolicy, ParamGroup, ParamSpace, SupervisionMask};

use crate::body_model::BodyModelError;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("unknown parameter space '{0}'")]
    UnknownParamSpace(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("loss became non-finite at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Model(#[from] BodyModelError),
    #[error("invalid adapter JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
