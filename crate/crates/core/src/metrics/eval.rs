//! Frame-batched evaluation of predictions against ground truth.

use std::collections::BTreeMap;

use super::{
    mean_l2, nmje, nmve, pa_error, per_part_report, DetectionScore, MetricsError, PaScope, PartError, PartErrorReport,
    PointSet,
};
use crate::io::{ArrayRecord, NpzArchive};

/// Per-frame vertices and/or joints.
#[derive(Debug, Clone, Default)]
pub struct FrameSet {
    pub vertices: Option<Vec<PointSet>>,
    pub joints: Option<Vec<PointSet>>,
    pub f1: Option<f64>,
}

fn frames_from(rec: &ArrayRecord, key: &str) -> Result<Vec<PointSet>, MetricsError> {
    let shape = rec.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(MetricsError::Input(format!(
            "'{key}' must have shape F×N×3, found {shape:?}"
        )));
    }
    let values = rec.to_f64();
    values.chunks_exact(shape[1] * 3).map(PointSet::from_flat).collect()
}

impl FrameSet {
    /// Reads `vertices` (F×V×3), `joints` (F×J×3) and an optional `f1` scalar.
    ///
    /// 32-bit float arrays are widened to 64-bit; they carry roughly seven
    /// significant digits, i.e. about 1e-4 mm at meter-scale coordinates.
    pub fn from_archive(archive: &NpzArchive) -> Result<Self, MetricsError> {
        let vertices = archive
            .get("vertices")
            .map(|r| frames_from(r, "vertices"))
            .transpose()?;
        let joints = archive.get("joints").map(|r| frames_from(r, "joints")).transpose()?;
        if vertices.is_none() && joints.is_none() {
            return Err(MetricsError::Input(
                "archive has neither 'vertices' nor 'joints'".into(),
            ));
        }
        let f1 = match archive.get("f1") {
            Some(r) if r.len() == 1 => Some(r.to_f64()[0]),
            Some(_) => return Err(MetricsError::Input("'f1' must be a scalar".into())),
            None => None,
        };
        Ok(Self { vertices, joints, f1 })
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub procrustes: bool,
    pub with_scale: bool,
    /// When set, per-part vertex errors are reported with this alignment scope.
    pub parts: Option<PaScope>,
    pub part_masks: BTreeMap<String, Vec<usize>>,
    /// Optional mapping from evaluated joint slots to source joint indices.
    pub joint_remap: Option<Vec<usize>>,
    pub f1: Option<DetectionScore>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            procrustes: true,
            with_scale: true,
            parts: None,
            part_masks: BTreeMap::new(),
            joint_remap: None,
            f1: None,
        }
    }
}

/// Frame-averaged metrics. Absent fields were not computable from the inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalSummary {
    pub frames: usize,
    pub pve: Option<f64>,
    pub pa_pve: Option<f64>,
    pub mpjpe: Option<f64>,
    pub pa_mpjpe: Option<f64>,
    pub nmve: Option<f64>,
    pub nmje: Option<f64>,
    pub parts: Option<PartErrorReport>,
}

/// Reorders joints: slot `k` of the result is `joints[indices[k]]`.
pub fn remap_joints(joints: &PointSet, indices: &[usize]) -> Result<PointSet, MetricsError> {
    joints.select(indices)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn paired<'a>(
    pred: &'a Option<Vec<PointSet>>,
    gt: &'a Option<Vec<PointSet>>,
) -> Result<Option<(&'a [PointSet], &'a [PointSet])>, MetricsError> {
    match (pred, gt) {
        (Some(p), Some(g)) => {
            if p.len() != g.len() {
                return Err(MetricsError::Input(format!(
                    "{} predicted frames vs {} ground-truth frames",
                    p.len(),
                    g.len()
                )));
            }
            if p.is_empty() {
                return Err(MetricsError::Empty);
            }
            Ok(Some((p, g)))
        }
        _ => Ok(None),
    }
}

/// Per-frame errors averaged in frame order.
pub fn evaluate(pred: &FrameSet, gt: &FrameSet, opts: &EvalOptions) -> Result<EvalSummary, MetricsError> {
    let mut summary = EvalSummary::default();

    if let Some((p, g)) = paired(&pred.vertices, &gt.vertices)? {
        summary.frames = p.len();
        let raw: Vec<f64> = p.iter().zip(g).map(|(a, b)| mean_l2(a, b)).collect::<Result<_, _>>()?;
        summary.pve = Some(mean(&raw));
        if opts.procrustes {
            let pa: Vec<f64> = p
                .iter()
                .zip(g)
                .map(|(a, b)| pa_error(a, b, opts.with_scale))
                .collect::<Result<_, _>>()?;
            summary.pa_pve = Some(mean(&pa));
        }
        if let Some(scope) = opts.parts {
            let reports: Vec<PartErrorReport> = p
                .iter()
                .zip(g)
                .map(|(a, b)| per_part_report(a, b, &opts.part_masks, scope, opts.with_scale))
                .collect::<Result<_, _>>()?;
            let avg = |f: fn(&PartErrorReport) -> PartError| PartError {
                raw: mean(&reports.iter().map(|r| f(r).raw).collect::<Vec<_>>()),
                pa: mean(&reports.iter().map(|r| f(r).pa).collect::<Vec<_>>()),
            };
            summary.parts = Some(PartErrorReport {
                all: avg(|r| r.all),
                body: avg(|r| r.body),
                hands: avg(|r| r.hands),
                face: avg(|r| r.face),
            });
        }
    }

    if let Some((p, g)) = paired(&pred.joints, &gt.joints)? {
        summary.frames = summary.frames.max(p.len());
        let pick = |s: &PointSet| match &opts.joint_remap {
            Some(idx) => remap_joints(s, idx),
            None => Ok(s.clone()),
        };
        let mut raw = Vec::with_capacity(p.len());
        let mut pa = Vec::with_capacity(p.len());
        for (a, b) in p.iter().zip(g) {
            let (a, b) = (pick(a)?, pick(b)?);
            raw.push(mean_l2(&a, &b)?);
            if opts.procrustes {
                pa.push(pa_error(&a, &b, opts.with_scale)?);
            }
        }
        summary.mpjpe = Some(mean(&raw));
        if opts.procrustes {
            summary.pa_mpjpe = Some(mean(&pa));
        }
    }

    let f1 = match (opts.f1, pred.f1) {
        (Some(f), _) => Some(f),
        (None, Some(v)) => Some(DetectionScore::new(v)?),
        (None, None) => None,
    };
    if let Some(f1) = f1 {
        summary.nmve = summary.pve.map(|e| nmve(e, f1));
        summary.nmje = summary.mpjpe.map(|e| nmje(e, f1));
    }
    Ok(summary)
}
