//! Keyed-array annotation containers ("HumanData"), stored as `.npz`.
//!
//! Recognized keys and their per-instance shapes (`N` leading):
//!
//! | key | shape |
//! |-----|-------|
//! | `smplx.global_orient` | N×3 |
//! | `smplx.body_pose` | N×21×3 |
//! | `smplx.jaw_pose` | N×3 |
//! | `smplx.leye_pose`, `smplx.reye_pose` | N×3 |
//! | `smplx.left_hand_pose`, `smplx.right_hand_pose` | N×15×3 |
//! | `smplx.betas` | N×10 |
//! | `smplx.expression` | N×10 |
//! | `smpl.global_orient` | N×3 |
//! | `smpl.body_pose` | N×23×3 |
//! | `smpl.betas` | N×10 |
//! | `keypoints3d` | N×K×3 (mm) |
//! | `bbox_xywh` | N×4 (px) |
//! | `meta.name` | UTF-8 bytes |
//! | `meta.param_space` | UTF-8 bytes, `smpl` or `smplx` |
//!
//! At least one per-instance key must be present and all of them must agree
//! on `N`. Keys outside this table are carried through unchanged and are not
//! validated.

use std::path::Path;

use thiserror::Error;

use super::array::ArrayRecord;
use super::npz::{read_npz, write_npz, NpzArchive};
use super::ContainerError;
use crate::adapter::{Annotation, ParamGroup, ParamSpace};

pub const KEY_PARAM_SPACE: &str = "meta.param_space";
pub const KEY_NAME: &str = "meta.name";

/// Trailing dimensions of each recognized per-instance key; `None` is free.
const SCHEMA: &[(&str, &[Option<usize>])] = &[
    ("smplx.global_orient", &[Some(3)]),
    ("smplx.body_pose", &[Some(21), Some(3)]),
    ("smplx.jaw_pose", &[Some(3)]),
    ("smplx.leye_pose", &[Some(3)]),
    ("smplx.reye_pose", &[Some(3)]),
    ("smplx.left_hand_pose", &[Some(15), Some(3)]),
    ("smplx.right_hand_pose", &[Some(15), Some(3)]),
    ("smplx.betas", &[Some(10)]),
    ("smplx.expression", &[Some(10)]),
    ("smpl.global_orient", &[Some(3)]),
    ("smpl.body_pose", &[Some(23), Some(3)]),
    ("smpl.betas", &[Some(10)]),
    ("keypoints3d", &[None, Some(3)]),
    ("bbox_xywh", &[Some(4)]),
];

#[derive(Debug, Error)]
pub enum HumanDataError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("no per-instance arrays present")]
    NoData,
    #[error("'{key}' has {found} instances, expected {expected}")]
    InstanceCountMismatch { key: String, expected: usize, found: usize },
    #[error("'{key}' has shape {found:?}, expected {expected}")]
    BadShape {
        key: String,
        expected: String,
        found: Vec<usize>,
    },
    #[error("unknown parameter space '{0}'")]
    UnknownParamSpace(String),
    #[error("'{0}' belongs to the other parameter space")]
    SpaceConflict(String),
}

impl HumanDataError {
    pub fn code(&self) -> &'static str {
        match self {
            HumanDataError::Container(e) => e.code(),
            HumanDataError::MissingKey(_) => "missing_key",
            HumanDataError::NoData => "no_data",
            HumanDataError::InstanceCountMismatch { .. } => "instance_count_mismatch",
            HumanDataError::BadShape { .. } => "bad_shape",
            HumanDataError::UnknownParamSpace(_) => "unknown_param_space",
            HumanDataError::SpaceConflict(_) => "space_conflict",
        }
    }
}

/// A validated annotation container.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanDataDoc {
    space: ParamSpace,
    instances: usize,
    arrays: NpzArchive,
}

fn describe(dims: &[Option<usize>]) -> String {
    let mut parts = vec!["N".to_string()];
    parts.extend(dims.iter().map(|d| d.map_or("*".to_string(), |d| d.to_string())));
    parts.join("×")
}

impl HumanDataDoc {
    /// Validates an archive. When `meta.param_space` is absent the space is
    /// inferred from the key prefixes.
    pub fn from_archive(mut arrays: NpzArchive) -> Result<Self, HumanDataError> {
        let space = match arrays.get(KEY_PARAM_SPACE) {
            Some(rec) => {
                let text = rec
                    .as_text()
                    .ok_or_else(|| HumanDataError::UnknownParamSpace("<non-text>".into()))?;
                text.parse::<ParamSpace>()
                    .map_err(|_| HumanDataError::UnknownParamSpace(text.to_string()))?
            }
            None => {
                let has = |p: &str| arrays.keys().any(|k| k.starts_with(p));
                match (has("smplx."), has("smpl.")) {
                    (true, false) => ParamSpace::Smplx,
                    (false, true) => ParamSpace::Smpl,
                    (true, true) => return Err(HumanDataError::SpaceConflict("smpl.* and smplx.* keys".into())),
                    (false, false) => return Err(HumanDataError::MissingKey(KEY_PARAM_SPACE.into())),
                }
            }
        };
        let foreign = match space {
            ParamSpace::Smplx => "smpl.",
            ParamSpace::Smpl => "smplx.",
        };
        if let Some(k) = arrays.keys().find(|k| k.starts_with(foreign)) {
            return Err(HumanDataError::SpaceConflict(k.clone()));
        }

        let mut instances: Option<(usize, &str)> = None;
        for (key, dims) in SCHEMA {
            let Some(rec) = arrays.get(*key) else { continue };
            let shape = rec.shape();
            let ok = shape.len() == dims.len() + 1
                && shape[1..]
                    .iter()
                    .zip(dims.iter())
                    .all(|(s, d)| d.is_none_or(|d| d == *s));
            if !ok {
                return Err(HumanDataError::BadShape {
                    key: key.to_string(),
                    expected: describe(dims),
                    found: shape.to_vec(),
                });
            }
            match instances {
                None => instances = Some((shape[0], key)),
                Some((n, _)) if n != shape[0] => {
                    return Err(HumanDataError::InstanceCountMismatch {
                        key: key.to_string(),
                        expected: n,
                        found: shape[0],
                    })
                }
                _ => {}
            }
        }
        let (instances, _) = instances.ok_or(HumanDataError::NoData)?;
        arrays
            .entry(KEY_PARAM_SPACE.to_string())
            .or_insert_with(|| ArrayRecord::text(space.as_str()));
        Ok(Self {
            space,
            instances,
            arrays,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HumanDataError> {
        Self::from_archive(read_npz(bytes)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        write_npz(&self.arrays)
    }

    pub fn write(&self, path: &Path) -> Result<(), HumanDataError> {
        std::fs::write(path, self.to_bytes()).map_err(ContainerError::from)?;
        Ok(())
    }

    pub fn param_space(&self) -> ParamSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.instances
    }

    pub fn is_empty(&self) -> bool {
        self.instances == 0
    }

    pub fn get(&self, key: &str) -> Option<&ArrayRecord> {
        self.arrays.get(key)
    }

    pub fn arrays(&self) -> &NpzArchive {
        &self.arrays
    }

    pub fn name(&self) -> Option<&str> {
        self.arrays.get(KEY_NAME).and_then(|r| r.as_text())
    }

    /// Parameter groups present, for the label policy.
    pub fn annotation(&self) -> Annotation {
        let prefix = self.space.as_str();
        let groups = [
            ("global_orient", ParamGroup::GlobalOrient),
            ("body_pose", ParamGroup::BodyPose),
            ("jaw_pose", ParamGroup::Jaw),
            ("leye_pose", ParamGroup::Eyes),
            ("left_hand_pose", ParamGroup::LeftHand),
            ("right_hand_pose", ParamGroup::RightHand),
            ("betas", ParamGroup::Betas),
            ("expression", ParamGroup::Expression),
        ];
        Annotation::new(
            self.space,
            groups
                .into_iter()
                .filter(|(k, _)| self.arrays.contains_key(&format!("{prefix}.{k}")))
                .map(|(_, g)| g),
        )
    }
}

pub fn load_humandata(path: &Path) -> Result<HumanDataDoc, HumanDataError> {
    let bytes = std::fs::read(path).map_err(ContainerError::from)?;
    HumanDataDoc::from_bytes(&bytes)
}
