//! Which ground-truth parameters a training annotation may supervise.
//!
//! Whole-body annotations supervise everything they carry. Annotations in
//! the body-only parameter space cannot be converted across mesh topologies,
//! so only their global orientation and body pose are used.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::body_model::layout::{BODY_JOINTS, EYES, GLOBAL_ORIENT, JAW, LEFT_HAND, RIGHT_HAND, SMPLX_JOINT_COUNT};

use super::AdapterError;

/// Parameter space an annotation is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamSpace {
    /// Body-only model (24 joints, no hands/face articulation).
    Smpl,
    /// Whole-body model (55 joints, shape and expression).
    Smplx,
}

impl ParamSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamSpace::Smpl => "smpl",
            ParamSpace::Smplx => "smplx",
        }
    }
}

impl fmt::Display for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamSpace {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smpl" => Ok(ParamSpace::Smpl),
            "smplx" | "smpl-x" | "smpl_x" => Ok(ParamSpace::Smplx),
            _ => Err(AdapterError::UnknownParamSpace(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    GlobalOrient,
    BodyPose,
    Jaw,
    Eyes,
    LeftHand,
    RightHand,
    Betas,
    Expression,
}

impl ParamGroup {
    fn joints(self) -> std::ops::Range<usize> {
        match self {
            ParamGroup::GlobalOrient => GLOBAL_ORIENT..GLOBAL_ORIENT + 1,
            ParamGroup::BodyPose => BODY_JOINTS,
            ParamGroup::Jaw => JAW..JAW + 1,
            ParamGroup::Eyes => EYES,
            ParamGroup::LeftHand => LEFT_HAND,
            ParamGroup::RightHand => RIGHT_HAND,
            ParamGroup::Betas | ParamGroup::Expression => 0..0,
        }
    }
}

/// The parameter groups an annotation carries, and the space they live in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub space: ParamSpace,
    pub present: BTreeSet<ParamGroup>,
}

impl Annotation {
    pub fn new(space: ParamSpace, present: impl IntoIterator<Item = ParamGroup>) -> Self {
        Self {
            space,
            present: present.into_iter().collect(),
        }
    }

    /// Parses the declared space name; unknown names are rejected.
    pub fn declared(space: &str, present: impl IntoIterator<Item = ParamGroup>) -> Result<Self, AdapterError> {
        Ok(Self::new(space.parse()?, present))
    }

    /// Every group of the given space.
    pub fn complete(space: ParamSpace) -> Self {
        let groups: Vec<ParamGroup> = match space {
            ParamSpace::Smpl => vec![ParamGroup::GlobalOrient, ParamGroup::BodyPose, ParamGroup::Betas],
            ParamSpace::Smplx => vec![
                ParamGroup::GlobalOrient,
                ParamGroup::BodyPose,
                ParamGroup::Jaw,
                ParamGroup::Eyes,
                ParamGroup::LeftHand,
                ParamGroup::RightHand,
                ParamGroup::Betas,
                ParamGroup::Expression,
            ],
        };
        Self::new(space, groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    FullSmplx,
    SmplPoseOnly,
}

impl LabelPolicy {
    pub fn for_space(space: ParamSpace) -> Self {
        match space {
            ParamSpace::Smpl => LabelPolicy::SmplPoseOnly,
            ParamSpace::Smplx => LabelPolicy::FullSmplx,
        }
    }
}

impl FromStr for LabelPolicy {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full_smplx" | "full" => Ok(LabelPolicy::FullSmplx),
            "smpl_pose_only" | "pose_only" => Ok(LabelPolicy::SmplPoseOnly),
            _ => Err(AdapterError::Config(format!("unknown label policy '{s}'"))),
        }
    }
}

/// Per-slot supervision flags over the 55-joint pose plus shape and expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupervisionMask {
    pub joints: [bool; SMPLX_JOINT_COUNT],
    pub betas: bool,
    pub expression: bool,
}

impl SupervisionMask {
    pub fn empty() -> Self {
        Self {
            joints: [false; SMPLX_JOINT_COUNT],
            betas: false,
            expression: false,
        }
    }

    pub fn supervised_joint_count(&self) -> usize {
        self.joints.iter().filter(|&&j| j).count()
    }

    pub fn is_empty(&self) -> bool {
        self.supervised_joint_count() == 0 && !self.betas && !self.expression
    }
}

/// Marks the parameters of `annotation` that training may supervise.
///
/// Body-only annotations are always restricted to global orientation and
/// body pose, whatever policy is requested.
pub fn apply_label_policy(policy: LabelPolicy, annotation: &Annotation) -> SupervisionMask {
    let effective = match annotation.space {
        ParamSpace::Smpl => LabelPolicy::SmplPoseOnly,
        ParamSpace::Smplx => policy,
    };
    let allowed = |g: ParamGroup| match effective {
        LabelPolicy::FullSmplx => true,
        LabelPolicy::SmplPoseOnly => matches!(g, ParamGroup::GlobalOrient | ParamGroup::BodyPose),
    };
    let mut mask = SupervisionMask::empty();
    for &g in annotation.present.iter().filter(|&&g| allowed(g)) {
        for j in g.joints() {
            mask.joints[j] = true;
        }
        match g {
            ParamGroup::Betas => mask.betas = true,
            ParamGroup::Expression => mask.expression = true,
            _ => {}
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_policy_on_whole_body_annotation() {
        let mask = apply_label_policy(LabelPolicy::FullSmplx, &Annotation::complete(ParamSpace::Smplx));
        assert_eq!(mask.supervised_joint_count(), 55);
        assert!(mask.betas && mask.expression);
    }

    #[test]
    fn body_only_annotation_supervises_22_slots() {
        for policy in [LabelPolicy::FullSmplx, LabelPolicy::SmplPoseOnly] {
            let mask = apply_label_policy(policy, &Annotation::complete(ParamSpace::Smpl));
            assert_eq!(mask.supervised_joint_count(), 22);
            assert!(mask.joints[0] && mask.joints[21] && !mask.joints[22]);
            assert!(!mask.betas && !mask.expression);
        }
    }

    #[test]
    fn pose_only_policy_on_whole_body_annotation() {
        let mask = apply_label_policy(LabelPolicy::SmplPoseOnly, &Annotation::complete(ParamSpace::Smplx));
        assert_eq!(mask.supervised_joint_count(), 22);
        assert!(!mask.betas);
    }

    #[test]
    fn empty_annotation_gives_empty_mask() {
        let mask = apply_label_policy(LabelPolicy::FullSmplx, &Annotation::new(ParamSpace::Smplx, []));
        assert!(mask.is_empty());
    }

    #[test]
    fn unknown_space_is_rejected() {
        assert!(matches!(
            Annotation::declared("smplh", [ParamGroup::BodyPose]),
            Err(AdapterError::UnknownParamSpace(_))
        ));
        assert_eq!("SMPL-X".parse::<ParamSpace>().unwrap(), ParamSpace::Smplx);
    }
}
