//! The default 55-joint whole-body joint layout.
//!
//! Slot 0 is the global orientation, then 21 body joints, the jaw, two eyes,
//! and fifteen joints per hand (left first).

use std::collections::BTreeMap;
use std::ops::Range;

pub const SMPLX_JOINT_COUNT: usize = 55;
pub const GLOBAL_ORIENT: usize = 0;
pub const BODY_JOINTS: Range<usize> = 1..22;
pub const JAW: usize = 22;
pub const EYES: Range<usize> = 23..25;
pub const LEFT_HAND: Range<usize> = 25..40;
pub const RIGHT_HAND: Range<usize> = 40..55;

pub const PART_BODY: &str = "body";
pub const PART_LEFT_HAND: &str = "left_hand";
pub const PART_RIGHT_HAND: &str = "right_hand";
pub const PART_FACE: &str = "face";

/// Part that owns a joint slot in the default layout.
pub fn smplx_joint_part(joint: usize) -> &'static str {
    match joint {
        j if j <= 21 => PART_BODY,
        j if j < LEFT_HAND.start => PART_FACE,
        j if LEFT_HAND.contains(&j) => PART_LEFT_HAND,
        _ => PART_RIGHT_HAND,
    }
}

/// Joint masks `{body, face, left_hand, right_hand}` for the default layout.
pub fn smplx_part_joint_masks() -> BTreeMap<String, Vec<usize>> {
    let mut masks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for j in 0..SMPLX_JOINT_COUNT {
        masks.entry(smplx_joint_part(j).to_string()).or_default().push(j);
    }
    masks
}
