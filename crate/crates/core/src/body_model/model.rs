use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::rotation::rodrigues;
use super::tree::{forward_kinematics, KinematicTree, RigidTransform};
use super::BodyModelError;

/// Row-sum tolerance for skinning weights and the joint regressor.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Per-joint axis-angle rotations (radians). Slot 0 is the global orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FullPose {
    axis_angle: Vec<Vector3<f64>>,
}

impl FullPose {
    /// Validates finiteness and the `|aa| < 2π` representative rule.
    pub fn new(axis_angle: Vec<Vector3<f64>>) -> Result<Self, BodyModelError> {
        for (i, aa) in axis_angle.iter().enumerate() {
            if !aa.iter().all(|c| c.is_finite()) {
                return Err(BodyModelError::NonFinite("pose"));
            }
            if aa.norm() >= 2.0 * PI {
                return Err(BodyModelError::InvalidPose(format!(
                    "joint {i} rotation magnitude {} is not below 2π",
                    aa.norm()
                )));
            }
        }
        Ok(Self { axis_angle })
    }

    pub fn zeros(joints: usize) -> Self {
        Self {
            axis_angle: vec![Vector3::zeros(); joints],
        }
    }

    /// Builds a pose from a flat `joints × 3` slice.
    pub fn from_flat(values: &[f64]) -> Result<Self, BodyModelError> {
        if !values.len().is_multiple_of(3) {
            return Err(BodyModelError::DimensionMismatch {
                what: "flat pose (multiple of 3)",
                expected: values.len() / 3 * 3,
                found: values.len(),
            });
        }
        Self::new(values.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.axis_angle.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn joint_count(&self) -> usize {
        self.axis_angle.len()
    }

    pub fn joint(&self, i: usize) -> &Vector3<f64> {
        &self.axis_angle[i]
    }

    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.axis_angle
    }

    pub fn set_joint(&mut self, i: usize, aa: Vector3<f64>) -> Result<(), BodyModelError> {
        if !aa.iter().all(|c| c.is_finite()) {
            return Err(BodyModelError::NonFinite("pose"));
        }
        if aa.norm() >= 2.0 * PI {
            return Err(BodyModelError::InvalidPose(format!(
                "joint {i} rotation magnitude {} is not below 2π",
                aa.norm()
            )));
        }
        self.axis_angle[i] = aa;
        Ok(())
    }

    pub fn rotation_matrices(&self) -> Vec<Matrix3<f64>> {
        self.axis_angle.iter().map(rodrigues).collect()
    }
}

/// Raw arrays of a model definition, before validation.
///
/// `shape_basis` is `3V × (num_shape + num_expression)` with row `3v + axis`;
/// `pose_corrective_basis` is `3V × 9(J-1)` driven by the entries of
/// `R_j - I` for every non-root joint in row-major order.
#[derive(Debug, Clone)]
pub struct ModelArrays {
    pub template: Vec<Vector3<f64>>,
    pub shape_basis: DMatrix<f64>,
    pub num_shape: usize,
    pub num_expression: usize,
    pub pose_corrective_basis: Option<DMatrix<f64>>,
    pub joint_regressor: DMatrix<f64>,
    pub skinning_weights: DMatrix<f64>,
    pub tree: KinematicTree,
    pub part_masks: BTreeMap<String, Vec<usize>>,
    pub part_joint_masks: BTreeMap<String, Vec<usize>>,
}

/// A validated linear-blend-skinned parametric body model. Units are millimeters.
#[derive(Debug, Clone)]
pub struct BodyModelDef {
    arrays: ModelArrays,
    pose_correctives_enabled: bool,
}

fn check_rows(what: &'static str, m: &DMatrix<f64>) -> Result<(), BodyModelError> {
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(BodyModelError::InvalidWeights {
                what,
                row: i,
                detail: "weights must be finite and nonnegative".into(),
            });
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(BodyModelError::InvalidWeights {
                what,
                row: i,
                detail: format!("row sums to {sum}"),
            });
        }
    }
    Ok(())
}

fn dim(what: &'static str, expected: usize, found: usize) -> Result<(), BodyModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(BodyModelError::DimensionMismatch { what, expected, found })
    }
}

impl BodyModelDef {
    pub fn new(arrays: ModelArrays) -> Result<Self, BodyModelError> {
        let v = arrays.template.len();
        let j = arrays.tree.joint_count();
        let k = arrays.num_shape + arrays.num_expression;
        if v == 0 {
            return Err(BodyModelError::DimensionMismatch {
                what: "vertex count (nonzero)",
                expected: 1,
                found: 0,
            });
        }
        if arrays.template.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(BodyModelError::NonFinite("template"));
        }
        dim("shape basis rows", 3 * v, arrays.shape_basis.nrows())?;
        dim("shape basis columns", k, arrays.shape_basis.ncols())?;
        if arrays.shape_basis.iter().any(|c| !c.is_finite()) {
            return Err(BodyModelError::NonFinite("shape basis"));
        }
        if let Some(p) = &arrays.pose_corrective_basis {
            dim("pose corrective rows", 3 * v, p.nrows())?;
            dim("pose corrective columns", 9 * (j - 1), p.ncols())?;
            if p.iter().any(|c| !c.is_finite()) {
                return Err(BodyModelError::NonFinite("pose corrective basis"));
            }
        }
        dim("joint regressor rows", j, arrays.joint_regressor.nrows())?;
        dim("joint regressor columns", v, arrays.joint_regressor.ncols())?;
        dim("skinning weight rows", v, arrays.skinning_weights.nrows())?;
        dim("skinning weight columns", j, arrays.skinning_weights.ncols())?;
        check_rows("joint regressor", &arrays.joint_regressor)?;
        check_rows("skinning weights", &arrays.skinning_weights)?;

        let mut owner = vec![None::<&str>; v];
        for (name, idx) in &arrays.part_masks {
            for &i in idx {
                if i >= v {
                    return Err(BodyModelError::InvalidMask {
                        name: name.clone(),
                        reason: format!("vertex index {i} out of range (V = {v})"),
                    });
                }
                if let Some(other) = owner[i] {
                    return Err(BodyModelError::InvalidMask {
                        name: name.clone(),
                        reason: format!("vertex {i} already belongs to part '{other}'"),
                    });
                }
                owner[i] = Some(name);
            }
        }
        for (name, idx) in &arrays.part_joint_masks {
            if let Some(&i) = idx.iter().find(|&&i| i >= j) {
                return Err(BodyModelError::InvalidMask {
                    name: name.clone(),
                    reason: format!("joint index {i} out of range (J = {j})"),
                });
            }
        }
        Ok(Self {
            arrays,
            pose_correctives_enabled: false,
        })
    }

    /// Pose-dependent corrective offsets are off by default.
    pub fn with_pose_correctives(mut self, enabled: bool) -> Self {
        self.pose_correctives_enabled = enabled && self.arrays.pose_corrective_basis.is_some();
        self
    }

    /// The same model with its shape (not expression) basis multiplied by `factor`.
    pub fn with_scaled_shape_basis(&self, factor: f64) -> Self {
        let mut out = self.clone();
        let k = out.arrays.num_shape;
        out.arrays.shape_basis.columns_mut(0, k).scale_mut(factor);
        out
    }

    pub fn pose_correctives_enabled(&self) -> bool {
        self.pose_correctives_enabled
    }

    pub fn arrays(&self) -> &ModelArrays {
        &self.arrays
    }

    pub fn vertex_count(&self) -> usize {
        self.arrays.template.len()
    }

    pub fn joint_count(&self) -> usize {
        self.arrays.tree.joint_count()
    }

    pub fn num_shape(&self) -> usize {
        self.arrays.num_shape
    }

    pub fn num_expression(&self) -> usize {
        self.arrays.num_expression
    }

    pub fn tree(&self) -> &KinematicTree {
        &self.arrays.tree
    }

    pub fn template(&self) -> &[Vector3<f64>] {
        &self.arrays.template
    }

    pub fn joint_regressor(&self) -> &DMatrix<f64> {
        &self.arrays.joint_regressor
    }

    pub fn skinning_weights(&self) -> &DMatrix<f64> {
        &self.arrays.skinning_weights
    }

    pub fn part_masks(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.arrays.part_masks
    }

    pub fn part_joint_masks(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.arrays.part_joint_masks
    }

    fn check_coefficients(&self, beta: &[f64], psi: &[f64]) -> Result<(), BodyModelError> {
        dim("shape coefficients", self.arrays.num_shape, beta.len())?;
        dim("expression coefficients", self.arrays.num_expression, psi.len())?;
        if beta.iter().chain(psi).any(|c| !c.is_finite()) {
            return Err(BodyModelError::NonFinite("shape/expression coefficients"));
        }
        Ok(())
    }

    fn check_pose(&self, pose: &FullPose) -> Result<(), BodyModelError> {
        dim("pose joints", self.joint_count(), pose.joint_count())
    }

    /// Template plus shape and expression offsets, one point per vertex.
    pub fn shaped_vertices(&self, beta: &[f64], psi: &[f64]) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        self.check_coefficients(beta, psi)?;
        let basis = &self.arrays.shape_basis;
        let coeffs: Vec<f64> = beta.iter().chain(psi).copied().collect();
        Ok(self
            .arrays
            .template
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let mut p = *t;
                for axis in 0..3 {
                    let row = basis.row(3 * v + axis);
                    p[axis] += row.iter().zip(&coeffs).map(|(b, c)| b * c).sum::<f64>();
                }
                p
            })
            .collect())
    }

    fn regress(&self, vertices: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let reg = &self.arrays.joint_regressor;
        (0..reg.nrows())
            .map(|j| {
                reg.row(j)
                    .iter()
                    .zip(vertices)
                    .fold(Vector3::zeros(), |acc, (w, p)| acc + *w * p)
            })
            .collect()
    }

    /// Joint locations of the shaped, unposed body.
    pub fn regress_rest_joints(&self, beta: &[f64], psi: &[f64]) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        let shaped = self.shaped_vertices(beta, psi)?;
        Ok(self.regress(&shaped))
    }

    /// World transform of every joint for the given pose and shape.
    pub fn joint_transforms(
        &self,
        pose: &FullPose,
        beta: &[f64],
        psi: &[f64],
    ) -> Result<Vec<RigidTransform>, BodyModelError> {
        self.check_pose(pose)?;
        let rest = self.regress_rest_joints(beta, psi)?;
        forward_kinematics(&self.arrays.tree, &pose.rotation_matrices(), &rest)
    }

    /// Posed mesh vertices by linear blend skinning.
    ///
    /// Each joint contributes `world_j ∘ translate(-rest_j)`, i.e. its motion
    /// relative to the rest configuration, blended by the skinning weights.
    pub fn skin(&self, pose: &FullPose, beta: &[f64], psi: &[f64]) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        self.check_pose(pose)?;
        let mut shaped = self.shaped_vertices(beta, psi)?;
        let rest = self.regress(&shaped);
        let rotations = pose.rotation_matrices();
        if self.pose_correctives_enabled {
            if let Some(basis) = &self.arrays.pose_corrective_basis {
                let features: Vec<f64> = rotations[1..]
                    .iter()
                    .flat_map(|r| {
                        let d = r - Matrix3::identity();
                        (0..3).flat_map(move |i| (0..3).map(move |k| d[(i, k)]))
                    })
                    .collect();
                for (v, p) in shaped.iter_mut().enumerate() {
                    for axis in 0..3 {
                        let row = basis.row(3 * v + axis);
                        p[axis] += row.iter().zip(&features).map(|(b, f)| b * f).sum::<f64>();
                    }
                }
            }
        }
        let world = forward_kinematics(&self.arrays.tree, &rotations, &rest)?;
        let relative: Vec<RigidTransform> = world
            .iter()
            .zip(&rest)
            .map(|(w, r)| RigidTransform::new(w.rotation, w.translation - w.rotation * r))
            .collect();
        Ok(blend(&self.arrays.skinning_weights, &relative, &shaped))
    }

    /// Posed keypoints: forward kinematics applied to the regressed rest joints.
    pub fn model_keypoints(
        &self,
        pose: &FullPose,
        beta: &[f64],
        psi: &[f64],
    ) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        Ok(self
            .joint_transforms(pose, beta, psi)?
            .into_iter()
            .map(|t| t.translation)
            .collect())
    }

    /// Alternative keypoints: the joint regressor applied to the posed mesh.
    pub fn mesh_regressed_joints(
        &self,
        pose: &FullPose,
        beta: &[f64],
        psi: &[f64],
    ) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        let posed = self.skin(pose, beta, psi)?;
        Ok(self.regress(&posed))
    }
}

fn blend(weights: &DMatrix<f64>, transforms: &[RigidTransform], points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let mut rot = Matrix3::zeros();
            let mut trans = Vector3::zeros();
            for (j, t) in transforms.iter().enumerate() {
                let w = weights[(v, j)];
                if w != 0.0 {
                    rot += w * t.rotation;
                    trans += w * t.translation;
                }
            }
            rot * p + trans
        })
        .collect()
}

/// Which keypoint definition to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeypointSource {
    /// Forward kinematics of the rest-pose regressed joints.
    #[default]
    Kinematic,
    /// Joint regressor applied to the skinned mesh.
    Mesh,
}

impl BodyModelDef {
    pub fn keypoints(
        &self,
        source: KeypointSource,
        pose: &FullPose,
        beta: &[f64],
        psi: &[f64],
    ) -> Result<Vec<Vector3<f64>>, BodyModelError> {
        match source {
            KeypointSource::Kinematic => self.model_keypoints(pose, beta, psi),
            KeypointSource::Mesh => self.mesh_regressed_joints(pose, beta, psi),
        }
    }
}
