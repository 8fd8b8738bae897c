//! Scalar type and the small amount of linear algebra shared by the engine.

use nalgebra::{Matrix3, Vector3};

/// Scalar used throughout the numeric core. `f64` unless the `f32` feature is on.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

pub type Vec3 = Vector3<Real>;
pub type Mat3 = Matrix3<Real>;

/// Quaternion stored as `[w, x, y, z]`.
pub type Quat = [Real; 4];

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

#[inline]
pub fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: Real) -> Real {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn quat_norm(q: &Quat) -> Real {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_mat(q: &Quat) -> Mat3 {
    let n = quat_norm(q);
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient w.r.t. the rotation matrix back to the raw (unnormalized) quaternion.
pub fn quat_to_mat_backward(q: &Quat, grad_r: &Mat3) -> Quat {
    let n = quat_norm(q);
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let g = |i: usize, j: usize| grad_r[(i, j)];

    let gw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));

    normalize_backward(&[w, x, y, z], n, &[gw, gx, gy, gz])
}

/// Gradient through `q -> q / |q|`, given the normalized value and the norm.
pub fn normalize_backward(unit: &Quat, norm: Real, grad_unit: &Quat) -> Quat {
    let dot = unit[0] * grad_unit[0]
        + unit[1] * grad_unit[1]
        + unit[2] * grad_unit[2]
        + unit[3] * grad_unit[3];
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (grad_unit[k] - unit[k] * dot) / norm;
    }
    out
}

/// Rotation about a unit axis by `angle` radians.
pub fn axis_angle(axis: &Vec3, angle: Real) -> Mat3 {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}
