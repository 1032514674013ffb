//! Mesh and joint error metrics: mean per-point L2 error, Procrustes-aligned
//! variants, detection-normalized errors and per-part breakdowns. All
//! distances are in millimeters and correspondence is by index.

pub mod align;
pub mod eval;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use thiserror::Error;

pub use align::{umeyama_align, SimilarityTransform};
pub use eval::{evaluate, remap_joints, EvalOptions, EvalSummary, FrameSet};

use crate::body_model::layout::{PART_BODY, PART_FACE, PART_LEFT_HAND, PART_RIGHT_HAND};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("point sets differ in size: {pred} predicted vs {gt} ground truth")]
    CardinalityMismatch { pred: usize, gt: usize },
    #[error("point set is empty")]
    Empty,
    #[error("point set contains non-finite coordinates")]
    NonFinite,
    #[error("degenerate alignment: {0}")]
    Degenerate(String),
    #[error("detection F1 must lie in (0, 1], got {0}")]
    InvalidF1(f64),
    #[error("part '{0}' has no vertices")]
    EmptyMask(String),
    #[error("part '{0}' is not defined")]
    MissingPart(String),
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0}")]
    Input(String),
}

/// A non-empty, finite set of 3D points in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vector3<f64>>,
    label: Option<String>,
}

impl PointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, MetricsError> {
        if points.is_empty() {
            return Err(MetricsError::Empty);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { points, label: None })
    }

    pub(crate) fn from_vec_unchecked(points: Vec<Vector3<f64>>) -> Self {
        Self { points, label: None }
    }

    /// From a flat `N × 3` slice.
    pub fn from_flat(values: &[f64]) -> Result<Self, MetricsError> {
        if !values.len().is_multiple_of(3) {
            return Err(MetricsError::Input(format!(
                "{} values do not form 3D points",
                values.len()
            )));
        }
        Self::new(values.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }

    /// The subset at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<PointSet, MetricsError> {
        if indices.is_empty() {
            return Err(MetricsError::Empty);
        }
        let points = indices
            .iter()
            .map(|&i| {
                self.points.get(i).copied().ok_or(MetricsError::IndexOutOfRange {
                    index: i,
                    len: self.points.len(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PointSet::from_vec_unchecked(points))
    }
}

/// `(1/N) Σ |p_i - g_i|`.
pub fn mean_l2(pred: &PointSet, gt: &PointSet) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::CardinalityMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let total: f64 = pred.points().iter().zip(gt.points()).map(|(p, g)| (p - g).norm()).sum();
    Ok(total / pred.len() as f64)
}

/// Mean L2 error after aligning `pred` onto `gt` with the best similarity
/// (or rigid transform when `with_scale` is false) fit on these same points.
pub fn pa_error(pred: &PointSet, gt: &PointSet, with_scale: bool) -> Result<f64, MetricsError> {
    let t = umeyama_align(pred, gt, with_scale)?;
    mean_l2(&t.apply_all(pred), gt)
}

/// Detection F1 score in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionScore(f64);

impl DetectionScore {
    pub fn new(f1: f64) -> Result<Self, MetricsError> {
        if f1 > 0.0 && f1 <= 1.0 {
            Ok(Self(f1))
        } else {
            Err(MetricsError::InvalidF1(f1))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Normalized mean vertex error: the vertex error divided by detection F1.
pub fn nmve(mve: f64, f1: DetectionScore) -> f64 {
    mve / f1.value()
}

/// Normalized mean joint error: the joint error divided by detection F1.
pub fn nmje(mpjpe: f64, f1: DetectionScore) -> f64 {
    mpjpe / f1.value()
}

/// Where Procrustes alignment is fit for per-part errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PaScope {
    /// Each part (and each hand separately) is aligned on its own vertices.
    #[default]
    PerPart,
    /// One alignment over the whole mesh, then errors read off per part.
    WholeBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PartError {
    pub raw: f64,
    pub pa: f64,
}

/// Raw and aligned errors for the whole mesh and each body part.
/// `hands` is the mean of the left- and right-hand errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PartErrorReport {
    pub all: PartError,
    pub body: PartError,
    pub hands: PartError,
    pub face: PartError,
}

impl PartErrorReport {
    pub fn rows(&self) -> [(&'static str, PartError); 4] {
        [
            ("all", self.all),
            ("body", self.body),
            ("hands", self.hands),
            ("face", self.face),
        ]
    }
}

fn mask<'a>(masks: &'a BTreeMap<String, Vec<usize>>, name: &str) -> Result<&'a [usize], MetricsError> {
    let m = masks
        .get(name)
        .ok_or_else(|| MetricsError::MissingPart(name.to_string()))?;
    if m.is_empty() {
        return Err(MetricsError::EmptyMask(name.to_string()));
    }
    Ok(m)
}

/// Per-part raw and Procrustes-aligned vertex errors.
///
/// `masks` must define `body`, `left_hand`, `right_hand` and `face`.
pub fn per_part_report(
    pred: &PointSet,
    gt: &PointSet,
    masks: &BTreeMap<String, Vec<usize>>,
    scope: PaScope,
    with_scale: bool,
) -> Result<PartErrorReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::CardinalityMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let whole = umeyama_align(pred, gt, with_scale)?;
    let aligned_whole = whole.apply_all(pred);

    let part = |name: &str| -> Result<PartError, MetricsError> {
        let idx = mask(masks, name)?;
        let p = pred.select(idx)?;
        let g = gt.select(idx)?;
        let raw = mean_l2(&p, &g)?;
        let pa = match scope {
            PaScope::PerPart => pa_error(&p, &g, with_scale)?,
            PaScope::WholeBody => mean_l2(&aligned_whole.select(idx)?, &g)?,
        };
        Ok(PartError { raw, pa })
    };

    let left = part(PART_LEFT_HAND)?;
    let right = part(PART_RIGHT_HAND)?;
    Ok(PartErrorReport {
        all: PartError {
            raw: mean_l2(pred, gt)?,
            pa: mean_l2(&aligned_whole, gt)?,
        },
        body: part(PART_BODY)?,
        hands: PartError {
            raw: 0.5 * (left.raw + right.raw),
            pa: 0.5 * (left.pa + right.pa),
        },
        face: part(PART_FACE)?,
    })
}
