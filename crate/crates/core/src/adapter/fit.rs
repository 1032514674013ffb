use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mlp::{AdapterGradients, MlpAdapter};
use super::AdapterError;
use crate::body_model::layout::PART_BODY;
use crate::body_model::{BodyModelDef, FullPose};

/// Training objective over per-vertex residuals `r_v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// `(1/V) Σ |r_v|`, the reported vertex-to-vertex error in mm.
    MeanL2,
    /// `(1/V) Σ |r_v|²`; smooth at zero residual, used for training.
    #[default]
    MeanSquared,
}

/// Zero-mean Gaussian axis-angle noise on a subset of joints; all other
/// joints, including the global orientation, stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPoseSampler {
    joint_count: usize,
    joints: Vec<usize>,
    sigma: f64,
}

impl GaussianPoseSampler {
    pub fn new(joint_count: usize, joints: Vec<usize>, sigma: f64) -> Result<Self, AdapterError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(AdapterError::Config(format!(
                "pose sigma must be positive, got {sigma}"
            )));
        }
        if let Some(&j) = joints.iter().find(|&&j| j >= joint_count) {
            return Err(AdapterError::Config(format!(
                "sampled joint {j} out of range for {joint_count} joints"
            )));
        }
        Ok(Self {
            joint_count,
            joints,
            sigma,
        })
    }

    /// Samples the model's `body` joints (all non-root joints if it has no
    /// such mask), excluding the root.
    pub fn for_model(model: &BodyModelDef, sigma: f64) -> Result<Self, AdapterError> {
        let joints = match model.part_joint_masks().get(PART_BODY) {
            Some(m) => m.iter().copied().filter(|&j| j != 0).collect(),
            None => (1..model.joint_count()).collect(),
        };
        Self::new(model.joint_count(), joints, sigma)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FullPose {
        let normal = Normal::new(0.0, self.sigma).expect("validated sigma");
        let mut pose = FullPose::zeros(self.joint_count);
        for &j in &self.joints {
            loop {
                let aa = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                if pose.set_joint(j, aa).is_ok() {
                    break;
                }
            }
        }
        pose
    }
}

/// Mesh of `model` at `pose` with zero expression, as an affine function of
/// shape: returns the mesh at zero shape and the `3V × K` Jacobian.
///
/// Vertices are affine in the shape coefficients at a fixed pose, so each
/// column is exactly the mesh at a unit basis direction minus the base mesh.
pub fn mesh_jacobian(model: &BodyModelDef, pose: &FullPose) -> Result<(DVector<f64>, DMatrix<f64>), AdapterError> {
    let k = model.num_shape();
    let psi = vec![0.0; model.num_expression()];
    let flat =
        |pts: Vec<Vector3<f64>>| DVector::from_iterator(3 * pts.len(), pts.into_iter().flat_map(|p| [p.x, p.y, p.z]));
    let mut beta = vec![0.0; k];
    let base = flat(model.skin(pose, &beta, &psi)?);
    let mut jac = DMatrix::zeros(base.len(), k);
    for c in 0..k {
        beta[c] = 1.0;
        let col = flat(model.skin(pose, &beta, &psi)?) - &base;
        jac.set_column(c, &col);
        beta[c] = 0.0;
    }
    Ok((base, jac))
}

/// One training pair: the source-model mesh at `(θ, β)` and the target
/// model's mesh at `θ` as an affine map of its shape coefficients.
#[derive(Debug, Clone)]
pub struct AdapterSample {
    pub beta: Vec<f64>,
    pub source_mesh: DVector<f64>,
    pub target_base: DVector<f64>,
    pub target_jacobian: DMatrix<f64>,
}

fn check_pair(source: &BodyModelDef, target: &BodyModelDef) -> Result<(), AdapterError> {
    if source.vertex_count() != target.vertex_count() {
        return Err(AdapterError::DimensionMismatch {
            what: "vertex count of the model pair",
            expected: source.vertex_count(),
            found: target.vertex_count(),
        });
    }
    if source.joint_count() != target.joint_count() {
        return Err(AdapterError::DimensionMismatch {
            what: "joint count of the model pair",
            expected: source.joint_count(),
            found: target.joint_count(),
        });
    }
    Ok(())
}

impl AdapterSample {
    pub fn new(
        source: &BodyModelDef,
        target: &BodyModelDef,
        pose: &FullPose,
        beta: &[f64],
    ) -> Result<Self, AdapterError> {
        check_pair(source, target)?;
        let psi = vec![0.0; source.num_expression()];
        let mesh = source.skin(pose, beta, &psi)?;
        let (target_base, target_jacobian) = mesh_jacobian(target, pose)?;
        Ok(Self {
            beta: beta.to_vec(),
            source_mesh: DVector::from_iterator(3 * mesh.len(), mesh.into_iter().flat_map(|p| [p.x, p.y, p.z])),
            target_base,
            target_jacobian,
        })
    }

    fn vertex_count(&self) -> usize {
        self.source_mesh.len() / 3
    }

    fn residual(&self, adapted: &DVector<f64>) -> DVector<f64> {
        &self.target_base + &self.target_jacobian * adapted - &self.source_mesh
    }

    /// Mean vertex-to-vertex distance (mm) under `adapter`.
    pub fn vertex_error(&self, adapter: &MlpAdapter) -> Result<f64, AdapterError> {
        let y = DVector::from_vec(adapter.forward(&self.beta)?);
        let r = self.residual(&y);
        Ok(objective_value(&r, Objective::MeanL2))
    }
}

fn objective_value(r: &DVector<f64>, objective: Objective) -> f64 {
    let v = (r.len() / 3) as f64;
    let norms = r
        .as_slice()
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]).norm());
    match objective {
        Objective::MeanL2 => norms.sum::<f64>() / v,
        Objective::MeanSquared => norms.map(|n| n * n).sum::<f64>() / v,
    }
}

fn objective_gradient(r: &DVector<f64>, objective: Objective) -> DVector<f64> {
    let v = (r.len() / 3) as f64;
    match objective {
        Objective::MeanSquared => r * (2.0 / v),
        Objective::MeanL2 => {
            let mut g = DVector::zeros(r.len());
            for (i, c) in r.as_slice().chunks_exact(3).enumerate() {
                let n = Vector3::new(c[0], c[1], c[2]).norm();
                if n > 0.0 {
                    for k in 0..3 {
                        g[3 * i + k] = c[k] / (v * n);
                    }
                }
            }
            g
        }
    }
}

/// Mean vertex-to-vertex distance (mm) between the source mesh at `(θ, β)`
/// and the target mesh at `(θ, adapter(β))`, by direct evaluation of both models.
pub fn adapter_loss(
    adapter: &MlpAdapter,
    source: &BodyModelDef,
    target: &BodyModelDef,
    pose: &FullPose,
    beta: &[f64],
) -> Result<f64, AdapterError> {
    check_pair(source, target)?;
    let a = source.skin(pose, beta, &vec![0.0; source.num_expression()])?;
    let adapted = adapter.forward(beta)?;
    let b = target.skin(pose, &adapted, &vec![0.0; target.num_expression()])?;
    Ok(a.iter().zip(&b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64)
}

/// Batch-mean objective and its exact gradient with respect to every adapter
/// parameter. Where a vertex residual is exactly zero the unsquared objective
/// contributes a zero gradient.
pub fn adapter_gradient(
    adapter: &MlpAdapter,
    samples: &[AdapterSample],
    objective: Objective,
) -> Result<(f64, AdapterGradients), AdapterError> {
    if samples.is_empty() {
        return Err(AdapterError::Config("gradient needs at least one sample".into()));
    }
    let mut total = 0.0;
    let mut grads = AdapterGradients::zeros_like(adapter);
    let scale = 1.0 / samples.len() as f64;
    for s in samples {
        if s.target_jacobian.ncols() != adapter.output_dim() {
            return Err(AdapterError::DimensionMismatch {
                what: "adapter output vs target shape coefficients",
                expected: s.target_jacobian.ncols(),
                found: adapter.output_dim(),
            });
        }
        let trace = adapter.trace(&s.beta)?;
        let r = s.residual(&trace.output);
        total += objective_value(&r, objective);
        let d_out = s.target_jacobian.transpose() * objective_gradient(&r, objective);
        grads.add_scaled(&adapter.backward(&trace, &d_out), scale);
    }
    debug_assert!(samples.iter().all(|s| s.vertex_count() > 0));
    Ok((total * scale, grads))
}

#[derive(Debug, Clone)]
pub struct AdapterTrainConfig {
    pub widths: Vec<usize>,
    pub iterations: usize,
    /// Fixed gradient-descent step. The curvature grows with the square of the
    /// basis scale (mm per unit) and with the fourth power of
    /// [`MlpAdapter::IDENTITY_GAIN`], hence the small default.
    pub step: f64,
    pub batch_size: usize,
    /// Pose-sampler spread (radians) used when the caller builds a sampler from this config.
    pub sigma: f64,
    /// Training stops once the held-out error drops to this level (mm).
    pub tolerance: f64,
    /// Standard deviation of sampled source shape coefficients.
    pub beta_std: f64,
    pub holdout: usize,
    pub eval_every: usize,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for AdapterTrainConfig {
    fn default() -> Self {
        Self {
            widths: MlpAdapter::DEFAULT_WIDTHS.to_vec(),
            iterations: 2000,
            step: 5e-7,
            batch_size: 8,
            sigma: 0.3,
            tolerance: 1e-7,
            beta_std: 1.0,
            holdout: 32,
            eval_every: 10,
            objective: Objective::MeanSquared,
            seed: 0,
        }
    }
}

impl AdapterTrainConfig {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(AdapterError::Config(format!("{name} must be positive, got {x}")))
            }
        };
        positive("step", self.step)?;
        positive("sigma", self.sigma)?;
        positive("tolerance", self.tolerance)?;
        positive("beta_std", self.beta_std)?;
        for (name, n) in [
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("holdout", self.holdout),
            ("eval_every", self.eval_every),
        ] {
            if n == 0 {
                return Err(AdapterError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    /// Parameters with the lowest held-out error seen.
    pub adapter: MlpAdapter,
    /// Held-out mean vertex error (mm) of `adapter`.
    pub final_error: f64,
    pub initial_error: f64,
    /// `(iteration, held-out error, best so far)` at each evaluation.
    pub history: Vec<(usize, f64, f64)>,
    pub iterations: usize,
}

fn draw_samples(
    source: &BodyModelDef,
    target: &BodyModelDef,
    sampler: &GaussianPoseSampler,
    beta_std: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AdapterSample>, AdapterError> {
    let normal = Normal::new(0.0, beta_std).expect("validated beta_std");
    (0..count)
        .map(|_| {
            let pose = sampler.sample(rng);
            let beta: Vec<f64> = (0..source.num_shape()).map(|_| normal.sample(rng)).collect();
            AdapterSample::new(source, target, &pose, &beta)
        })
        .collect()
}

fn holdout_error(adapter: &MlpAdapter, samples: &[AdapterSample]) -> Result<f64, AdapterError> {
    let mut total = 0.0;
    for s in samples {
        total += s.vertex_error(adapter)?;
    }
    Ok(total / samples.len() as f64)
}

/// Fits an adapter from `source` shape coefficients to `target` ones by
/// fixed-step gradient descent on freshly sampled `(θ, β)` batches.
///
/// The network starts as the identity map. Progress is measured on a fixed
/// held-out set, and the best parameters seen are returned.
pub fn fit_adapter(
    source: &BodyModelDef,
    target: &BodyModelDef,
    sampler: &GaussianPoseSampler,
    config: &AdapterTrainConfig,
) -> Result<FitReport, AdapterError> {
    config.validate()?;
    check_pair(source, target)?;
    let widths = &config.widths;
    if widths[0] != source.num_shape() || widths[widths.len() - 1] != target.num_shape() {
        return Err(AdapterError::Config(format!(
            "adapter widths {widths:?} do not map {} to {} shape coefficients",
            source.num_shape(),
            target.num_shape()
        )));
    }
    let mut adapter = MlpAdapter::identity_init(widths, config.seed)?;

    let mut holdout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_401d_u64);
    let holdout = draw_samples(
        source,
        target,
        sampler,
        config.beta_std,
        config.holdout,
        &mut holdout_rng,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let initial_error = holdout_error(&adapter, &holdout)?;
    let mut best = (initial_error, adapter.clone());
    let mut history = vec![(0, initial_error, initial_error)];
    let mut iterations = 0;

    while iterations < config.iterations && best.0 > config.tolerance {
        iterations += 1;
        let batch = draw_samples(source, target, sampler, config.beta_std, config.batch_size, &mut rng)?;
        let (loss, grads) = adapter_gradient(&adapter, &batch, config.objective)?;
        if !loss.is_finite() {
            return Err(AdapterError::Diverged { iteration: iterations });
        }
        adapter.step(&grads, config.step);
        if !adapter.is_finite() {
            return Err(AdapterError::Diverged { iteration: iterations });
        }
        if iterations % config.eval_every == 0 || iterations == config.iterations {
            let err = holdout_error(&adapter, &holdout)?;
            if !err.is_finite() {
                return Err(AdapterError::Diverged { iteration: iterations });
            }
            if err < best.0 {
                best = (err, adapter.clone());
            }
            history.push((iterations, err, best.0));
        }
    }

    Ok(FitReport {
        adapter: best.1,
        final_error: best.0,
        initial_error,
        history,
        iterations,
    })
}
