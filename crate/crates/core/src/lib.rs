//! Mesh-embedded Gaussian avatars: a blendshape mesh drives a fixed set of
//! UV-sampled Gaussians, an expression-conditioned network adds per-Gaussian
//! residuals, and a differentiable tile rasterizer renders and trains them.

pub mod avatar;
pub mod bundle;
pub mod dataset;
pub mod error;
pub mod gaussians;
pub mod geometry;
pub mod image;
pub mod math;
pub mod offsets;
pub mod render;
pub mod synthetic;
pub mod train;
pub mod uv;

pub use error::{Error, Result};
