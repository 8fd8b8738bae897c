//! Real spherical harmonics up to degree 3 (Condon-Shortley phase, index
//! `l*l + l + m`), the convention used by Gaussian splatting renderers.

use crate::math::{Real, Vec3};

pub const SH_C0: Real = 0.28209479177387814;
const SH_C1: Real = 0.4886025119029199;
const SH_C2: [Real; 5] = [
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
];
const SH_C3: [Real; 7] = [
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
];

pub const MAX_SH_DEGREE: u32 = 3;

pub const fn sh_coeff_count(degree: u32) -> usize {
    ((degree + 1) * (degree + 1)) as usize
}

/// Basis values at a unit direction; only the first `sh_coeff_count(degree)` are filled.
pub fn sh_basis(degree: u32, d: &Vec3) -> [Real; 16] {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut b = [0.0; 16];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (xx - yy);
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[9] = SH_C3[0] * y * (3.0 * xx - yy);
        b[10] = SH_C3[1] * x * y * z;
        b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
        b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
        b[14] = SH_C3[5] * z * (xx - yy);
        b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    }
    b
}

/// Partial derivatives of each basis polynomial w.r.t. (x, y, z), treating the
/// components as independent.
fn sh_basis_grad(degree: u32, d: &Vec3) -> [[Real; 3]; 16] {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut g = [[0.0; 3]; 16];
    if degree >= 1 {
        g[1] = [0.0, -SH_C1, 0.0];
        g[2] = [0.0, 0.0, SH_C1];
        g[3] = [-SH_C1, 0.0, 0.0];
    }
    if degree >= 2 {
        g[4] = [SH_C2[0] * y, SH_C2[0] * x, 0.0];
        g[5] = [0.0, SH_C2[1] * z, SH_C2[1] * y];
        g[6] = [-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z];
        g[7] = [SH_C2[3] * z, 0.0, SH_C2[3] * x];
        g[8] = [2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0];
    }
    if degree >= 3 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        g[9] = [
            SH_C3[0] * 6.0 * x * y,
            SH_C3[0] * (3.0 * xx - 3.0 * yy),
            0.0,
        ];
        g[10] = [SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y];
        g[11] = [
            SH_C3[2] * (-2.0 * x * y),
            SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
            SH_C3[2] * 8.0 * y * z,
        ];
        g[12] = [
            SH_C3[3] * (-6.0 * x * z),
            SH_C3[3] * (-6.0 * y * z),
            SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
        ];
        g[13] = [
            SH_C3[4] * (4.0 * zz - 3.0 * xx - yy),
            SH_C3[4] * (-2.0 * x * y),
            SH_C3[4] * 8.0 * x * z,
        ];
        g[14] = [
            SH_C3[5] * 2.0 * x * z,
            SH_C3[5] * (-2.0 * y * z),
            SH_C3[5] * (xx - yy),
        ];
        g[15] = [
            SH_C3[6] * (3.0 * xx - 3.0 * yy),
            SH_C3[6] * (-6.0 * x * y),
            0.0,
        ];
    }
    g
}

/// Colour from SH coefficients laid out `[coeff][channel]`, with the +0.5
/// offset and a clamp at zero. Returns the colour and per-channel clamp flags.
pub fn evaluate_sh(degree: u32, coeffs: &[Real], dir: &Vec3) -> ([Real; 3], [bool; 3]) {
    let basis = sh_basis(degree, dir);
    let mut c = [0.5; 3];
    for (k, b) in basis.iter().take(sh_coeff_count(degree)).enumerate() {
        for ch in 0..3 {
            c[ch] += b * coeffs[3 * k + ch];
        }
    }
    let clamped = c.map(|v| v < 0.0);
    (c.map(|v| v.max(0.0)), clamped)
}

/// Backward of [`evaluate_sh`]. Accumulates into `grad_coeffs` and returns the
/// gradient w.r.t. the (unit) direction's components.
pub fn evaluate_sh_backward(
    degree: u32,
    coeffs: &[Real],
    dir: &Vec3,
    clamped: [bool; 3],
    grad_color: [Real; 3],
    grad_coeffs: &mut [Real],
) -> Vec3 {
    let g = [0, 1, 2].map(|ch| if clamped[ch] { 0.0 } else { grad_color[ch] });
    let basis = sh_basis(degree, dir);
    let n = sh_coeff_count(degree);
    for k in 0..n {
        for ch in 0..3 {
            grad_coeffs[3 * k + ch] += basis[k] * g[ch];
        }
    }
    let mut grad_dir = Vec3::zeros();
    if degree >= 1 {
        let bg = sh_basis_grad(degree, dir);
        for k in 1..n {
            let w = coeffs[3 * k] * g[0] + coeffs[3 * k + 1] * g[1] + coeffs[3 * k + 2] * g[2];
            grad_dir += Vec3::new(bg[k][0], bg[k][1], bg[k][2]) * w;
        }
    }
    grad_dir
}
