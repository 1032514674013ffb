//! Axis-angle <-> rotation matrix conversions.

use nalgebra::{Matrix3, Vector3};
use std::f64::consts::PI;

/// Below this angle the closed form is replaced by its second-order expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula: maps an axis-angle vector (radians) to a proper rotation.
///
/// `R = I + sin(a)/a [k]x + (1 - cos(a))/a^2 [k]x^2` with `a = |k|`.
pub fn rodrigues(axis_angle: &Vector3<f64>) -> Matrix3<f64> {
    let angle = axis_angle.norm();
    let k = skew(axis_angle);
    let k2 = k * k;
    if angle < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k2;
    }
    let a2 = angle * angle;
    Matrix3::identity() + (angle.sin() / angle) * k + ((1.0 - angle.cos()) / a2) * k2
}

/// Inverse of [`rodrigues`]: returns the canonical axis-angle with angle in `[0, pi]`.
///
/// At exactly `pi` the axis sign is ambiguous; the representative with a
/// non-negative first nonzero component is returned.
pub fn log_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = (r.trace() - 1.0) * 0.5;
    let angle = (0.5 * w.norm()).atan2(cos);
    if angle < SMALL_ANGLE {
        return 0.5 * w;
    }
    if PI - angle > 1e-3 {
        return w * (angle / (2.0 * angle.sin()));
    }
    // Near a half turn the antisymmetric part vanishes; take the axis from
    // k k^T = (S - cos I) / (1 - cos) with S the symmetric part.
    let s = (r + r.transpose()) * 0.5;
    let kkt = (s - Matrix3::identity() * angle.cos()) / (1.0 - angle.cos());
    let i = (0..3).max_by(|&a, &c| kkt[(a, a)].total_cmp(&kkt[(c, c)])).unwrap_or(0);
    let mut axis = kkt.column(i).into_owned();
    axis.normalize_mut();
    let d = axis.dot(&w);
    if d.abs() > 1e-14 {
        if d < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().copied().find(|c| c.abs() > 1e-12) {
        if first < 0.0 {
            axis = -axis;
        }
    }
    axis * angle
}

/// Wraps an axis-angle vector so its magnitude lies in `[0, pi]` without changing the rotation.
pub fn canonical_axis_angle(aa: &Vector3<f64>) -> Vector3<f64> {
    log_rotation(&rodrigues(aa))
}
