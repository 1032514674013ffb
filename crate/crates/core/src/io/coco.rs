//! COCO-style annotation documents with optional parametric-body labels.
//!
//! Fields outside the recognized set are kept in `extra` maps and written
//! back unchanged, so `write(parse(x))` reproduces documents produced by
//! [`CocoAnnotationDoc::to_json`].

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::adapter::{Annotation, ParamGroup, ParamSpace};

#[derive(Debug, Error)]
pub enum CocoError {
    #[error("invalid annotation JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("annotation {annotation} references missing image {image}")]
    DanglingImage { annotation: u64, image: u64 },
    #[error("annotation {annotation} has an invalid bbox {bbox:?}")]
    InvalidBbox { annotation: u64, bbox: [f64; 4] },
    #[error("annotation {annotation}: {detail}")]
    InvalidParams { annotation: u64, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CocoError {
    pub fn code(&self) -> &'static str {
        match self {
            CocoError::Json(_) => "invalid_json",
            CocoError::DuplicateId { .. } => "duplicate_id",
            CocoError::DanglingImage { .. } => "dangling_image",
            CocoError::InvalidBbox { .. } => "invalid_bbox",
            CocoError::InvalidParams { .. } => "invalid_params",
            CocoError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Whole-body parameters, axis-angle radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmplxParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jaw_pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lhand_pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhand_pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// Body-only parameters: 24×3 pose (root first) and 10 shape coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmplParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smplx_param: Option<SmplxParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smpl_param: Option<SmplParams>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl CocoAnnotation {
    /// Parameter groups carried by this annotation, if it has body labels.
    pub fn body_annotation(&self) -> Option<Annotation> {
        if let Some(p) = &self.smplx_param {
            let groups = [
                (p.root_pose.is_some(), ParamGroup::GlobalOrient),
                (p.body_pose.is_some(), ParamGroup::BodyPose),
                (p.jaw_pose.is_some(), ParamGroup::Jaw),
                (p.lhand_pose.is_some(), ParamGroup::LeftHand),
                (p.rhand_pose.is_some(), ParamGroup::RightHand),
                (p.shape.is_some(), ParamGroup::Betas),
                (p.expr.is_some(), ParamGroup::Expression),
            ];
            return Some(Annotation::new(
                ParamSpace::Smplx,
                groups.into_iter().filter(|(present, _)| *present).map(|(_, g)| g),
            ));
        }
        self.smpl_param.as_ref().map(|p| {
            let mut groups = Vec::new();
            if p.pose.is_some() {
                groups.extend([ParamGroup::GlobalOrient, ParamGroup::BodyPose]);
            }
            if p.shape.is_some() {
                groups.push(ParamGroup::Betas);
            }
            Annotation::new(ParamSpace::Smpl, groups)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotationDoc {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

fn check_len(annotation: u64, name: &str, values: &Option<Vec<f64>>, expected: usize) -> Result<(), CocoError> {
    match values {
        Some(v) if v.len() != expected => Err(CocoError::InvalidParams {
            annotation,
            detail: format!("{name} has {} values, expected {expected}", v.len()),
        }),
        Some(v) if v.iter().any(|x| !x.is_finite()) => Err(CocoError::InvalidParams {
            annotation,
            detail: format!("{name} has non-finite values"),
        }),
        _ => Ok(()),
    }
}

impl CocoAnnotationDoc {
    pub fn validate(&self) -> Result<(), CocoError> {
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(CocoError::DuplicateId {
                    kind: "image",
                    id: img.id,
                });
            }
        }
        let mut ann_ids = HashSet::new();
        for ann in &self.annotations {
            if !ann_ids.insert(ann.id) {
                return Err(CocoError::DuplicateId {
                    kind: "annotation",
                    id: ann.id,
                });
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(CocoError::DanglingImage {
                    annotation: ann.id,
                    image: ann.image_id,
                });
            }
            let [x, y, w, h] = ann.bbox;
            if ![x, y, w, h].iter().all(|v| v.is_finite()) || w <= 0.0 || h <= 0.0 {
                return Err(CocoError::InvalidBbox {
                    annotation: ann.id,
                    bbox: ann.bbox,
                });
            }
            if let Some(k) = &ann.keypoints {
                if k.len() % 3 != 0 {
                    return Err(CocoError::InvalidParams {
                        annotation: ann.id,
                        detail: format!("keypoints length {} is not a multiple of 3", k.len()),
                    });
                }
            }
            if let Some(p) = &ann.smplx_param {
                check_len(ann.id, "root_pose", &p.root_pose, 3)?;
                check_len(ann.id, "body_pose", &p.body_pose, 63)?;
                check_len(ann.id, "jaw_pose", &p.jaw_pose, 3)?;
                check_len(ann.id, "lhand_pose", &p.lhand_pose, 45)?;
                check_len(ann.id, "rhand_pose", &p.rhand_pose, 45)?;
                check_len(ann.id, "shape", &p.shape, 10)?;
                check_len(ann.id, "expr", &p.expr, 10)?;
                check_len(ann.id, "trans", &p.trans, 3)?;
            }
            if let Some(p) = &ann.smpl_param {
                check_len(ann.id, "pose", &p.pose, 72)?;
                check_len(ann.id, "shape", &p.shape, 10)?;
                check_len(ann.id, "trans", &p.trans, 3)?;
            }
            if ann.smplx_param.is_some() && ann.smpl_param.is_some() {
                return Err(CocoError::InvalidParams {
                    annotation: ann.id,
                    detail: "carries both smplx_param and smpl_param".into(),
                });
            }
        }
        Ok(())
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CocoError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

pub fn parse_coco(text: &str) -> Result<CocoAnnotationDoc, CocoError> {
    let doc: CocoAnnotationDoc = serde_json::from_str(text)?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_coco(path: &Path) -> Result<CocoAnnotationDoc, CocoError> {
    parse_coco(&std::fs::read_to_string(path)?)
}
