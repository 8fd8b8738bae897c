use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PositionalEncoding;
use crate::error::{Error, Result};
use crate::math::Real;

/// Residual width per Gaussian: position (3), rotation (4), log-scale (3).
pub const OUTPUT_DIM: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Number of linear layers, the last one being the linear output layer.
    pub depth: usize,
    pub width: usize,
    pub encoding: PositionalEncoding,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            width: 256,
            encoding: PositionalEncoding::default(),
        }
    }
}

/// Fully connected layer, `y = x W + b` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<Real>,
    pub bias: Array1<Real>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetNetwork {
    pub config: NetworkConfig,
    pub psi_dim: usize,
    pub layers: Vec<Dense>,
}

/// Activations kept for the backward pass: the input followed by each layer's
/// (post-ReLU for hidden layers) output.
#[derive(Clone, Debug)]
pub struct NetworkTrace {
    pub activations: Vec<Array2<Real>>,
}

impl NetworkTrace {
    pub fn output(&self) -> &Array2<Real> {
        self.activations.last().expect("trace has an output")
    }
}

/// Per-layer `(dW, db)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGradients {
    pub layers: Vec<(Array2<Real>, Array1<Real>)>,
}

impl OffsetNetwork {
    /// He-uniform hidden layers, zero output layer.
    pub fn new(config: NetworkConfig, psi_dim: usize, seed: u64) -> Result<Self> {
        if config.depth == 0 || config.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "offset network needs depth >= 1 and width >= 1, got depth={} width={}",
                config.depth, config.width
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = config.encoding.dim() + psi_dim;
        let mut layers = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let fan_in = if l == 0 { input } else { config.width };
            let fan_out = if l + 1 == config.depth {
                OUTPUT_DIM
            } else {
                config.width
            };
            let weight = if l + 1 == config.depth {
                Array2::zeros((fan_in, fan_out))
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-bound..bound) as Real
                })
            };
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(Self {
            config,
            psi_dim,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.encoding.dim() + self.psi_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|d| d.weight.len() + d.bias.len())
            .sum()
    }

    /// Rows `[encoded anchor, psi]`.
    pub fn build_inputs(&self, encoded: &Array2<Real>, psi: &[Real]) -> Result<Array2<Real>> {
        if psi.len() != self.psi_dim {
            return Err(Error::DimensionMismatch {
                what: "expression code",
                expected: self.psi_dim,
                actual: psi.len(),
            });
        }
        let enc = self.config.encoding.dim();
        let mut x = Array2::zeros((encoded.nrows(), enc + self.psi_dim));
        for (mut row, src) in x.outer_iter_mut().zip(encoded.outer_iter()) {
            for k in 0..enc {
                row[k] = src[k];
            }
            for (k, v) in psi.iter().enumerate() {
                row[enc + k] = *v;
            }
        }
        Ok(x)
    }

    pub fn forward(&self, input: Array2<Real>) -> NetworkTrace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = activations[l].dot(&layer.weight);
            y += &layer.bias;
            if l + 1 < self.layers.len() {
                y.mapv_inplace(|v| v.max(0.0));
            }
            activations.push(y);
        }
        NetworkTrace { activations }
    }

    pub fn backward(&self, trace: &NetworkTrace, grad_output: &Array2<Real>) -> NetworkGradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.clone();
        for l in (0..self.layers.len()).rev() {
            let x = &trace.activations[l];
            grads.push((x.t().dot(&g), g.sum_axis(Axis(0))));
            if l > 0 {
                let mut gx = g.dot(&self.layers[l].weight.t());
                // ReLU: the stored activation is positive exactly where the pre-activation was
                ndarray::Zip::from(&mut gx)
                    .and(x)
                    .for_each(|gv, &xv| {
                        if xv <= 0.0 {
                            *gv = 0.0;
                        }
                    });
                g = gx;
            }
        }
        grads.reverse();
        NetworkGradients { layers: grads }
    }
}
