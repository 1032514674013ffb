//! Closed-form similarity alignment (Umeyama).

use nalgebra::{Matrix3, Vector3};

use super::{MetricsError, PointSet};

/// `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn apply_all(&self, points: &PointSet) -> PointSet {
        PointSet::from_vec_unchecked(points.points().iter().map(|p| self.apply(p)).collect())
    }
}

/// Relative size of the second singular value below which the
/// cross-covariance is treated as rank-deficient.
pub const DEGENERACY_RATIO: f64 = 1e-10;

/// Least-squares similarity (or rigid, without scale) mapping `src` onto `dst`.
///
/// Minimizes `Σ |s R x_i + t - y_i|²`. The SVD sign correction keeps
/// `det(R) = +1`, so mirrored inputs get the best proper rotation rather than
/// a reflection.
pub fn umeyama_align(src: &PointSet, dst: &PointSet, with_scale: bool) -> Result<SimilarityTransform, MetricsError> {
    if src.len() != dst.len() {
        return Err(MetricsError::CardinalityMismatch {
            pred: src.len(),
            gt: dst.len(),
        });
    }
    let n = src.len();
    if n < 3 {
        return Err(MetricsError::Degenerate(format!(
            "alignment needs at least 3 points, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mu_src = src.centroid();
    let mu_dst = dst.centroid();

    let mut cov = Matrix3::zeros();
    let mut var_src = 0.0;
    for (x, y) in src.points().iter().zip(dst.points()) {
        let xc = x - mu_src;
        let yc = y - mu_dst;
        cov += yc * xc.transpose();
        var_src += xc.norm_squared();
    }
    cov *= inv_n;
    var_src *= inv_n;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(MetricsError::Degenerate("SVD did not converge".into())),
    };
    // nalgebra does not order singular values; sort descending with their vectors.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = Vector3::from_fn(|i, _| svd.singular_values[order[i]]);
    let u = Matrix3::from_fn(|r, c| u[(r, order[c])]);
    let v_t = Matrix3::from_fn(|r, c| v_t[(order[r], c)]);

    if !(sv[0] > 0.0) || sv[1] <= DEGENERACY_RATIO * sv[0] {
        return Err(MetricsError::Degenerate(
            "points are coincident or collinear; rotation is not determined".into(),
        ));
    }

    let mut signs = Vector3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        signs[2] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = if with_scale { sv.dot(&signs) / var_src } else { 1.0 };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(MetricsError::Degenerate(format!(
            "non-positive alignment scale {scale}"
        )));
    }
    let translation = mu_dst - scale * (rotation * mu_src);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}
