//! Whole-body (body, hands, face) pose-and-shape evaluation and data curation.
//!
//! - [`body_model`]: parametric body model with linear blend skinning.
//! - [`metrics`]: vertex/joint errors, Procrustes alignment, per-part reports.
//! - [`benchmark`]: mean primary error, dataset ranking and selection.
//! - [`sampling`]: per-dataset training quotas and resampled schedules.
//! - [`adapter`]: shape-parameter adapter fitting and label supervision policy.
//! - [`geometry`]: token grids, ROI cropping and parameter-vector packing.
//! - [`io`]: array containers, annotation documents and report tables.

pub mod adapter;
pub mod benchmark;
pub mod body_model;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod sampling;
