use nalgebra::{Matrix3, Vector3};

use super::BodyModelError;

/// Parent table of an articulated skeleton.
///
/// Joint 0 is the only root and every other joint's parent precedes it, so a
/// single forward sweep visits parents before children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
}

/// Parent table of the 55-joint whole-body layout: pelvis-rooted body (22),
/// jaw, two eyes, then fifteen joints for each hand.
pub const SMPLX_PARENTS: [i64; 55] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 15, 15, 15, 20, 25, 26, 20, 28, 29, 20,
    31, 32, 20, 34, 35, 20, 37, 38, 21, 40, 41, 21, 43, 44, 21, 46, 47, 21, 49, 50, 21, 52, 53,
];

impl KinematicTree {
    /// Builds a tree from a signed parent table where `-1` marks the root.
    pub fn new(parents: &[i64]) -> Result<Self, BodyModelError> {
        if parents.is_empty() {
            return Err(BodyModelError::MalformedTree("tree has no joints".into()));
        }
        let mut out = Vec::with_capacity(parents.len());
        for (i, &p) in parents.iter().enumerate() {
            match (i, p) {
                (0, -1) => out.push(None),
                (0, p) => {
                    return Err(BodyModelError::MalformedTree(format!(
                        "joint 0 must be the root, found parent {p}"
                    )))
                }
                (i, -1) => return Err(BodyModelError::MalformedTree(format!("joint {i} is a second root"))),
                (i, p) if p < 0 || p as usize >= i => {
                    return Err(BodyModelError::MalformedTree(format!(
                        "joint {i} has parent {p}; parents must precede their children"
                    )))
                }
                (_, p) => out.push(Some(p as usize)),
            }
        }
        Ok(Self { parents: out })
    }

    /// The default whole-body skeleton.
    pub fn smplx() -> Self {
        Self::new(&SMPLX_PARENTS).expect("static layout is valid")
    }

    /// A simple chain `0 <- 1 <- 2 ...`.
    pub fn chain(joints: usize) -> Result<Self, BodyModelError> {
        let parents: Vec<i64> = (0..joints as i64).map(|i| i - 1).collect();
        Self::new(&parents)
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    /// Parent table with `-1` for the root, as stored on disk.
    pub fn signed_parents(&self) -> Vec<i64> {
        self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect()
    }
}

/// Rotation followed by translation: `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// World transforms of every joint.
///
/// `world(i) = world(parent) ∘ translate(rest_i - rest_parent) ∘ rotate(local_i)`.
/// The root is `rotate(local_0) ∘ translate(rest_0)`: the global orientation
/// pivots about the model origin, so a rotation placed in slot 0 rotates the
/// whole posed body rigidly about the origin. The translation of each world
/// transform is the posed joint position.
pub fn forward_kinematics(
    tree: &KinematicTree,
    local_rotations: &[Matrix3<f64>],
    rest_joints: &[Vector3<f64>],
) -> Result<Vec<RigidTransform>, BodyModelError> {
    let n = tree.joint_count();
    if local_rotations.len() != n {
        return Err(BodyModelError::DimensionMismatch {
            what: "local rotations",
            expected: n,
            found: local_rotations.len(),
        });
    }
    if rest_joints.len() != n {
        return Err(BodyModelError::DimensionMismatch {
            what: "rest joints",
            expected: n,
            found: rest_joints.len(),
        });
    }
    let mut world: Vec<RigidTransform> = Vec::with_capacity(n);
    for i in 0..n {
        let t = match tree.parent(i) {
            None => RigidTransform::new(local_rotations[0], local_rotations[0] * rest_joints[0]),
            Some(p) => world[p].compose(&RigidTransform::new(
                local_rotations[i],
                rest_joints[i] - rest_joints[p],
            )),
        };
        world.push(t);
    }
    Ok(world)
}
