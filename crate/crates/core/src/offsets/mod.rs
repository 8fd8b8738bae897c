//! Expression-conditioned residuals on top of the mesh-embedded field, and
//! their composition with the base attributes.

mod encoding;
mod network;

pub use encoding::PositionalEncoding;
pub use network::{Dense, NetworkConfig, NetworkGradients, NetworkTrace, OffsetNetwork, OUTPUT_DIM};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussians::GaussianField;
use crate::math::{quat_norm, Quat, Real, Vec3};
use crate::render::{SplatGradients, SplatScene};

/// Rotation residuals whose sum with the base has a smaller norm fall back to the base.
pub const DEGENERATE_ROTATION_NORM: Real = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetMode {
    #[default]
    Dynamic,
    /// Per-Gaussian constants, independent of the expression.
    Static,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OffsetModel {
    Dynamic {
        net: OffsetNetwork,
        /// Encoded canonical anchors, one row per Gaussian.
        encoded: Array2<Real>,
    },
    Static {
        residuals: Array2<Real>,
        psi_dim: usize,
    },
}

/// Output of one prediction plus what its backward needs.
#[derive(Clone, Debug)]
pub struct OffsetPass {
    pub residuals: Array2<Real>,
    trace: Option<NetworkTrace>,
}

impl OffsetModel {
    pub fn dynamic(net: OffsetNetwork, canonical_anchors: &[Vec3]) -> Self {
        let enc = net.config.encoding;
        let mut encoded = Array2::zeros((canonical_anchors.len(), enc.dim()));
        for (mut row, p) in encoded.outer_iter_mut().zip(canonical_anchors) {
            enc.encode_into(p, row.as_slice_mut().expect("row-major"));
        }
        OffsetModel::Dynamic { net, encoded }
    }

    pub fn fixed(count: usize, psi_dim: usize) -> Self {
        OffsetModel::Static {
            residuals: Array2::zeros((count, OUTPUT_DIM)),
            psi_dim,
        }
    }

    pub fn mode(&self) -> OffsetMode {
        match self {
            OffsetModel::Dynamic { .. } => OffsetMode::Dynamic,
            OffsetModel::Static { .. } => OffsetMode::Static,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            OffsetModel::Dynamic { encoded, .. } => encoded.nrows(),
            OffsetModel::Static { residuals, .. } => residuals.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn psi_dim(&self) -> usize {
        match self {
            OffsetModel::Dynamic { net, .. } => net.psi_dim,
            OffsetModel::Static { psi_dim, .. } => *psi_dim,
        }
    }

    pub fn predict(&self, psi: &[Real]) -> Result<OffsetPass> {
        match self {
            OffsetModel::Dynamic { net, encoded } => {
                let trace = net.forward(net.build_inputs(encoded, psi)?);
                Ok(OffsetPass {
                    residuals: trace.output().clone(),
                    trace: Some(trace),
                })
            }
            OffsetModel::Static { residuals, psi_dim } => {
                if psi.len() != *psi_dim {
                    return Err(Error::DimensionMismatch {
                        what: "expression code",
                        expected: *psi_dim,
                        actual: psi.len(),
                    });
                }
                Ok(OffsetPass {
                    residuals: residuals.clone(),
                    trace: None,
                })
            }
        }
    }

    /// Gradients for every tensor in [`Self::parameters`] order.
    pub fn backward(&self, pass: &OffsetPass, grad_residuals: &Array2<Real>) -> Vec<Vec<Real>> {
        match self {
            OffsetModel::Dynamic { net, .. } => {
                let trace = pass.trace.as_ref().expect("dynamic pass keeps its trace");
                net.backward(trace, grad_residuals)
                    .layers
                    .into_iter()
                    .flat_map(|(w, b)| [w.iter().copied().collect(), b.to_vec()])
                    .collect()
            }
            OffsetModel::Static { .. } => vec![grad_residuals.iter().copied().collect()],
        }
    }

    /// Learnable tensors, flattened row-major.
    pub fn parameters(&self) -> Vec<&[Real]> {
        match self {
            OffsetModel::Dynamic { net, .. } => net
                .layers
                .iter()
                .flat_map(|d| {
                    [
                        d.weight.as_slice().expect("row-major"),
                        d.bias.as_slice().expect("contiguous"),
                    ]
                })
                .collect(),
            OffsetModel::Static { residuals, .. } => vec![residuals.as_slice().expect("row-major")],
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [Real]> {
        match self {
            OffsetModel::Dynamic { net, .. } => net
                .layers
                .iter_mut()
                .flat_map(|d| {
                    [
                        d.weight.as_slice_mut().expect("row-major"),
                        d.bias.as_slice_mut().expect("contiguous"),
                    ]
                })
                .collect(),
            OffsetModel::Static { residuals, .. } => {
                vec![residuals.as_slice_mut().expect("row-major")]
            }
        }
    }
}

/// Per-Gaussian attributes after applying residuals. `rotations` holds the raw
/// sum `r + dr`; the rasterizer normalizes it.
#[derive(Clone, Debug, PartialEq)]
pub struct Composed {
    pub means: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub scales: Vec<Vec3>,
    /// Gaussians whose rotation residual was discarded as degenerate.
    pub fallback: Vec<bool>,
}

impl Composed {
    pub fn scene<'a>(&'a self, field: &'a GaussianField) -> SplatScene<'a> {
        SplatScene {
            means: &self.means,
            rotations: &self.rotations,
            scales: &self.scales,
            opacity_logits: &field.opacity_logits,
            sh: &field.sh,
            sh_degree: field.sh_degree,
        }
    }

    pub fn unit_rotations(&self) -> Vec<Quat> {
        self.rotations
            .iter()
            .map(|q| {
                let n = quat_norm(q);
                q.map(|v| v / n)
            })
            .collect()
    }
}

/// `mu = anchor + dmu`, `r = normalize(r + dr)`, `s = exp(s_log + ds)`.
pub fn compose(field: &GaussianField, anchors: &[Vec3], residuals: &Array2<Real>) -> Result<Composed> {
    let n = field.len();
    if anchors.len() != n {
        return Err(Error::DimensionMismatch {
            what: "anchors",
            expected: n,
            actual: anchors.len(),
        });
    }
    if residuals.dim() != (n, OUTPUT_DIM) {
        return Err(Error::DimensionMismatch {
            what: "residual rows",
            expected: n,
            actual: residuals.nrows(),
        });
    }
    let mut out = Composed {
        means: Vec::with_capacity(n),
        rotations: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
        fallback: Vec::with_capacity(n),
    };
    for i in 0..n {
        let d = residuals.row(i);
        out.means
            .push(anchors[i] + Vec3::new(d[0], d[1], d[2]));
        let base = field.rotations[i];
        let q: Quat = std::array::from_fn(|k| base[k] + d[3 + k]);
        let degenerate = !(quat_norm(&q) >= DEGENERATE_ROTATION_NORM);
        out.rotations.push(if degenerate { base } else { q });
        out.fallback.push(degenerate);
        let s = field.log_scales[i];
        out.scales.push(Vec3::new(
            (s[0] + d[7]).exp(),
            (s[1] + d[8]).exp(),
            (s[2] + d[9]).exp(),
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComposeGradients {
    pub residuals: Array2<Real>,
    pub rotations: Vec<Quat>,
    pub log_scales: Vec<[Real; 3]>,
}

/// Splits rasterizer gradients into residual and base-attribute gradients.
pub fn compose_backward(composed: &Composed, grads: &SplatGradients) -> ComposeGradients {
    let n = composed.means.len();
    let mut residuals = Array2::zeros((n, OUTPUT_DIM));
    let mut rotations = Vec::with_capacity(n);
    let mut log_scales = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = residuals.row_mut(i);
        for a in 0..3 {
            row[a] = grads.means[i][a];
        }
        if !composed.fallback[i] {
            for k in 0..4 {
                row[3 + k] = grads.rotations[i][k];
            }
        }
        rotations.push(grads.rotations[i]);
        let g: [Real; 3] = std::array::from_fn(|a| grads.scales[i][a] * composed.scales[i][a]);
        for a in 0..3 {
            row[7 + a] = g[a];
        }
        log_scales.push(g);
    }
    ComposeGradients {
        residuals,
        rotations,
        log_scales,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::IDENTITY_QUAT;

    fn field(n: usize) -> GaussianField {
        let mut f = GaussianField::initialize(&vec![0.05; n], 0).unwrap();
        f.rotations[0] = [0.6, 0.8, 0.0, 0.0];
        f
    }

    #[test]
    fn zero_residuals_are_identity() {
        let f = field(3);
        let anchors = vec![Vec3::new(0.1, 0.2, 0.3); 3];
        let c = compose(&f, &anchors, &Array2::zeros((3, OUTPUT_DIM))).unwrap();
        assert_eq!(c.means, anchors);
        assert_eq!(c.rotations, f.rotations);
        for i in 0..3 {
            assert_eq!(c.scales[i], Vec3::from(f.log_scales[i].map(Real::exp)));
        }
    }

    #[test]
    fn log_two_residual_doubles_scale() {
        let f = field(1);
        let mut r = Array2::zeros((1, OUTPUT_DIM));
        for a in 7..10 {
            r[[0, a]] = (2.0 as Real).ln();
        }
        let c = compose(&f, &[Vec3::zeros()], &r).unwrap();
        for a in 0..3 {
            assert!((c.scales[0][a] - 2.0 * f.log_scales[0][a].exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn cancelling_rotation_residual_falls_back_to_base() {
        let f = field(1);
        let mut r = Array2::zeros((1, OUTPUT_DIM));
        for k in 0..4 {
            r[[0, 3 + k]] = -f.rotations[0][k];
        }
        let c = compose(&f, &[Vec3::zeros()], &r).unwrap();
        assert!(c.fallback[0]);
        assert_eq!(c.rotations[0], f.rotations[0]);
    }

    #[test]
    fn composed_rotation_has_unit_norm() {
        let f = field(2);
        let mut r = Array2::zeros((2, OUTPUT_DIM));
        r[[1, 4]] = 0.7;
        r[[1, 6]] = -0.2;
        let c = compose(&f, &[Vec3::zeros(); 2], &r).unwrap();
        for q in c.unit_rotations() {
            assert!((quat_norm(&q) - 1.0).abs() < 1e-12);
        }
        assert_ne!(c.rotations[1], IDENTITY_QUAT);
    }

    #[test]
    fn static_model_ignores_expression_but_checks_its_length() {
        let mut m = OffsetModel::fixed(4, 2);
        m.parameters_mut()[0][5] = 0.25;
        let a = m.predict(&[0.0, 1.0]).unwrap().residuals;
        let b = m.predict(&[3.0, -1.0]).unwrap().residuals;
        assert_eq!(a, b);
        assert_eq!(a[[0, 5]], 0.25);
        assert!(m.predict(&[0.0]).is_err());
    }

    #[test]
    fn dynamic_model_starts_at_zero() {
        let net = OffsetNetwork::new(
            NetworkConfig {
                depth: 3,
                width: 16,
                ..Default::default()
            },
            3,
            1,
        )
        .unwrap();
        let anchors: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as Real * 0.1, 0.0, 0.5)).collect();
        let m = OffsetModel::dynamic(net, &anchors);
        let pass = m.predict(&[0.3, -0.2, 1.0]).unwrap();
        assert!(pass.residuals.iter().all(|&v| v == 0.0));
        let grads = m.backward(&pass, &Array2::ones((5, OUTPUT_DIM)));
        let shapes: Vec<usize> = m.parameters().iter().map(|p| p.len()).collect();
        assert_eq!(grads.iter().map(Vec::len).collect::<Vec<_>>(), shapes);
    }
}
