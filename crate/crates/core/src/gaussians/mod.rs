//! The fixed-count Gaussian field and the per-primitive projection math.

mod camera;
mod sh;

pub use camera::{Camera, Intrinsics, Orbit};
pub use sh::{
    evaluate_sh, evaluate_sh_backward, sh_basis, sh_coeff_count, MAX_SH_DEGREE, SH_C0,
};

use nalgebra::{Matrix2, Matrix2x3};

use crate::error::{Error, Result};
use crate::geometry::BlendshapeMesh;
use crate::math::{logit, quat_norm, quat_to_mat, Mat3, Quat, Real, Vec3, IDENTITY_QUAT};
use crate::uv::{RegionMultipliers, SurfaceBinding};

/// Screen-space variance added to both diagonal entries of every projected covariance.
pub const LOW_PASS_FLOOR: Real = 0.3;
/// Camera-space depth below which a Gaussian is culled.
pub const NEAR_PLANE: Real = 0.01;
/// Densities below this are treated as zero.
pub const ALPHA_CUTOFF: Real = 1.0 / 255.0;
/// Bounding radius in standard deviations, `sqrt(2 ln 255)` rounded up.
pub const CULL_SIGMAS: Real = 3.33;

/// `R S S^T R^T` for quaternion `r` (normalized internally) and scales `s`.
pub fn covariance_3d(r: &Quat, s: &Vec3) -> Mat3 {
    let m = quat_to_mat(r) * Mat3::from_diagonal(s);
    m * m.transpose()
}

/// Jacobian of the perspective projection at camera-space point `t`.
#[inline]
pub fn projection_jacobian(t: &Vec3, fx: Real, fy: Real) -> Matrix2x3<Real> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        fx * iz,
        0.0,
        -fx * t.x * iz * iz,
        0.0,
        fy * iz,
        -fy * t.y * iz * iz,
    )
}

/// `J W Sigma W^T J^T + floor * I`, or `None` when the point is behind the near plane.
pub fn project_covariance(sigma: &Mat3, mean_cam: &Vec3, cam: &Camera) -> Option<Matrix2<Real>> {
    if mean_cam.z <= NEAR_PLANE {
        return None;
    }
    let j = projection_jacobian(mean_cam, cam.intrinsics.fx, cam.intrinsics.fy);
    let t = j * cam.rotation;
    let mut cov = t * sigma * t.transpose();
    cov[(0, 0)] += LOW_PASS_FLOOR;
    cov[(1, 1)] += LOW_PASS_FLOOR;
    // enforce exact symmetry
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    Some(cov)
}

/// `exp(-1/2 d^T conic d)` where `conic` is the inverse 2D covariance.
#[inline]
pub fn evaluate_density(conic: &Matrix2<Real>, d: [Real; 2]) -> Real {
    let q = conic[(0, 0)] * d[0] * d[0]
        + 2.0 * conic[(0, 1)] * d[0] * d[1]
        + conic[(1, 1)] * d[1] * d[1];
    (-0.5 * q).exp()
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
#[inline]
pub fn max_eigenvalue_2x2(a: Real, b: Real, c: Real) -> Real {
    let mid = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    mid + disc
}

/// Pixel radius enclosing the density cutoff.
#[inline]
pub fn cull_radius(cov2d: &Matrix2<Real>) -> Real {
    CULL_SIGMAS * max_eigenvalue_2x2(cov2d[(0, 0)], cov2d[(0, 1)], cov2d[(1, 1)]).sqrt()
}

/// Learnable base attributes of a fixed number of Gaussians. Positions are not
/// stored: they come from the mesh binding plus predicted offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField {
    pub rotations: Vec<Quat>,
    pub log_scales: Vec<[Real; 3]>,
    pub opacity_logits: Vec<Real>,
    /// `[gaussian][coeff][channel]`, flattened.
    pub sh: Vec<Real>,
    pub sh_degree: u32,
}

/// Opacity assigned to fresh Gaussians.
pub const INITIAL_OPACITY: Real = 0.1;

impl GaussianField {
    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }

    pub fn sh_stride(&self) -> usize {
        3 * sh_coeff_count(self.sh_degree)
    }

    pub fn sh_of(&self, i: usize) -> &[Real] {
        let s = self.sh_stride();
        &self.sh[i * s..(i + 1) * s]
    }

    /// Identity rotations, gray colour, low opacity and isotropic scales equal
    /// to the local sample spacing given per Gaussian.
    pub fn initialize(spacings: &[Real], sh_degree: u32) -> Result<Self> {
        if sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "SH degree {sh_degree} exceeds {MAX_SH_DEGREE}"
            )));
        }
        let n = spacings.len();
        Ok(Self {
            rotations: vec![IDENTITY_QUAT; n],
            log_scales: spacings.iter().map(|s| [s.ln(); 3]).collect(),
            opacity_logits: vec![logit(INITIAL_OPACITY); n],
            sh: vec![0.0; n * 3 * sh_coeff_count(sh_degree)],
            sh_degree,
        })
    }

    pub fn renormalize_rotations(&mut self) {
        for q in &mut self.rotations {
            let n = quat_norm(q);
            if n > 0.0 {
                q.iter_mut().for_each(|c| *c /= n);
            } else {
                *q = IDENTITY_QUAT;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n || self.opacity_logits.len() != n {
            return Err(Error::DimensionMismatch {
                what: "gaussian attribute arrays",
                expected: n,
                actual: self.log_scales.len().min(self.opacity_logits.len()),
            });
        }
        if self.sh.len() != n * self.sh_stride() {
            return Err(Error::DimensionMismatch {
                what: "SH coefficient array",
                expected: n * self.sh_stride(),
                actual: self.sh.len(),
            });
        }
        Ok(())
    }
}

/// Per-anchor isotropic spacing: the sample pitch of the UV lattice pushed
/// through the face's UV-to-surface area ratio.
pub fn local_sample_spacing(
    binding: &SurfaceBinding,
    mesh: &BlendshapeMesh,
    multipliers: RegionMultipliers,
) -> Vec<Real> {
    let res = binding.resolution() as Real;
    let mut per_face = vec![None; mesh.face_count()];
    binding
        .samples()
        .iter()
        .map(|s| {
            let f = s.face as usize;
            *per_face[f].get_or_insert_with(|| {
                let [a, b, c] = mesh.faces[f].map(|v| mesh.vertices[v as usize]);
                let area3 = 0.5 * (b - a).cross(&(c - a)).norm();
                let uv = &mesh.uv_coords[f];
                let area_uv = 0.5
                    * ((uv[1][0] - uv[0][0]) * (uv[2][1] - uv[0][1])
                        - (uv[1][1] - uv[0][1]) * (uv[2][0] - uv[0][0]))
                        .abs();
                let k = if mesh.regions.mouth[f] {
                    multipliers.mouth as Real
                } else {
                    1.0
                };
                (area3 / area_uv.max(1e-30)).sqrt() / (res * k)
            })
        })
        .collect()
}
