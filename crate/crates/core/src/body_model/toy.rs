//! Small synthetic body models for tests, demos and the shape-adapter toy pair.
//!
//! Each joint owns a cluster of vertices around its rest position. Vertices are
//! skinned to their own joint and its parent, the regressor averages a joint's
//! own cluster, and shape/expression bases are random millimeter offsets.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layout::{smplx_joint_part, SMPLX_JOINT_COUNT};
use super::tree::{KinematicTree, SMPLX_PARENTS};
use super::{BodyModelDef, BodyModelError, ModelArrays};

#[derive(Debug, Clone)]
pub struct ToyModelConfig {
    pub parents: Vec<i64>,
    /// Part name per joint; vertices inherit the part of their owning joint.
    pub joint_parts: Vec<String>,
    pub vertices_per_joint: usize,
    pub num_shape: usize,
    pub num_expression: usize,
    /// Standard deviation of shape/expression basis entries (mm per unit).
    pub basis_scale: f64,
    pub with_pose_correctives: bool,
    pub seed: u64,
}

impl ToyModelConfig {
    /// A generic tree whose joints all belong to the `body` part.
    pub fn for_tree(parents: Vec<i64>, seed: u64) -> Self {
        let n = parents.len();
        Self {
            parents,
            joint_parts: vec!["body".to_string(); n],
            vertices_per_joint: 3,
            num_shape: 10,
            num_expression: 10,
            basis_scale: 5.0,
            with_pose_correctives: false,
            seed,
        }
    }

    /// The 55-joint whole-body layout with body/face/hand parts.
    pub fn smplx_layout(seed: u64) -> Self {
        Self {
            parents: SMPLX_PARENTS.to_vec(),
            joint_parts: (0..SMPLX_JOINT_COUNT)
                .map(|j| smplx_joint_part(j).to_string())
                .collect(),
            vertices_per_joint: 2,
            num_shape: 10,
            num_expression: 10,
            basis_scale: 5.0,
            with_pose_correctives: false,
            seed,
        }
    }

    /// A random topologically sorted tree of `joints` joints.
    pub fn random_tree(joints: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7ee5);
        let parents = (0..joints)
            .map(|i| if i == 0 { -1 } else { rng.random_range(0..i) as i64 })
            .collect();
        Self::for_tree(parents, seed)
    }
}

pub fn toy_model(config: &ToyModelConfig) -> Result<BodyModelDef, BodyModelError> {
    let tree = KinematicTree::new(&config.parents)?;
    let j = tree.joint_count();
    if config.joint_parts.len() != j {
        return Err(BodyModelError::DimensionMismatch {
            what: "joint part labels",
            expected: j,
            found: config.joint_parts.len(),
        });
    }
    let per = config.vertices_per_joint.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut joints = vec![Vector3::zeros(); j];
    joints[0] = Vector3::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    );
    for i in 1..j {
        let p = tree.parent(i).unwrap_or(0);
        let offset = Vector3::new(
            rng.random_range(-120.0..120.0),
            rng.random_range(-120.0..120.0),
            rng.random_range(-120.0..120.0),
        );
        joints[i] = joints[p] + offset;
    }

    let v = j * per;
    let mut template = Vec::with_capacity(v);
    let mut skinning = DMatrix::zeros(v, j);
    let mut regressor = DMatrix::zeros(j, v);
    let mut part_masks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for joint in 0..j {
        let mut reg_total = 0.0;
        for k in 0..per {
            let idx = joint * per + k;
            template.push(
                joints[joint]
                    + Vector3::new(
                        rng.random_range(-30.0..30.0),
                        rng.random_range(-30.0..30.0),
                        rng.random_range(-30.0..30.0),
                    ),
            );
            match tree.parent(joint) {
                Some(p) => {
                    let own: f64 = rng.random_range(0.5..1.0);
                    skinning[(idx, joint)] = own;
                    skinning[(idx, p)] = 1.0 - own;
                }
                None => skinning[(idx, joint)] = 1.0,
            }
            let w: f64 = rng.random_range(0.2..1.0);
            regressor[(joint, idx)] = w;
            reg_total += w;
            part_masks
                .entry(config.joint_parts[joint].clone())
                .or_default()
                .push(idx);
        }
        for k in 0..per {
            regressor[(joint, joint * per + k)] /= reg_total;
        }
    }

    let coeffs = config.num_shape + config.num_expression;
    let normal = Normal::new(0.0, config.basis_scale).expect("positive scale");
    let shape_basis = DMatrix::from_fn(3 * v, coeffs, |_, _| normal.sample(&mut rng));
    let pose_corrective_basis = config.with_pose_correctives.then(|| {
        let small = Normal::new(0.0, 2.0).expect("positive scale");
        DMatrix::from_fn(3 * v, 9 * (j - 1), |_, _| small.sample(&mut rng))
    });

    let mut part_joint_masks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (joint, part) in config.joint_parts.iter().enumerate() {
        part_joint_masks.entry(part.clone()).or_default().push(joint);
    }

    let model = BodyModelDef::new(ModelArrays {
        template,
        shape_basis,
        num_shape: config.num_shape,
        num_expression: config.num_expression,
        pose_corrective_basis,
        joint_regressor: regressor,
        skinning_weights: skinning,
        tree,
        part_masks,
        part_joint_masks,
    })?;
    Ok(model.with_pose_correctives(config.with_pose_correctives))
}
