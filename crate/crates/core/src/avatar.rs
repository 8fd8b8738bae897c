//! A mesh-driven Gaussian avatar: mesh, UV binding, base field and offset model.

use crate::error::{Error, Result};
use crate::gaussians::{local_sample_spacing, Camera, GaussianField};
use crate::geometry::{BlendshapeMesh, ExpressionCode};
use crate::math::{Real, Vec3};
use crate::offsets::{compose, Composed, OffsetMode, OffsetModel, OffsetNetwork, OffsetPass};
use crate::render::{render, RenderSettings, Rendered};
use crate::train::TrainConfig;
use crate::uv::{rasterize_uv, RegionMultipliers, SurfaceBinding};

#[derive(Clone, Debug, PartialEq)]
pub struct Avatar {
    pub mesh: BlendshapeMesh,
    pub binding: SurfaceBinding,
    pub field: GaussianField,
    pub offsets: OffsetModel,
}

/// Per-frame intermediate values.
#[derive(Clone, Debug)]
pub struct Posed {
    pub anchors: Vec<Vec3>,
    pub pass: OffsetPass,
    pub composed: Composed,
}

impl Avatar {
    /// Samples the mesh at the configured UV resolution and initializes every parameter.
    pub fn build(mesh: BlendshapeMesh, cfg: &TrainConfig) -> Result<Self> {
        let binding = rasterize_uv(
            &mesh,
            cfg.uv_resolution as usize,
            &mesh.regions,
            multipliers(cfg),
        )?;
        Self::with_binding(mesh, binding, cfg)
    }

    pub fn with_binding(mesh: BlendshapeMesh, binding: SurfaceBinding, cfg: &TrainConfig) -> Result<Self> {
        let spacing = local_sample_spacing(&binding, &mesh, multipliers(cfg));
        let field = GaussianField::initialize(&spacing, cfg.sh_degree)?;
        let offsets = match cfg.offset_mode {
            OffsetMode::Dynamic => {
                let net = OffsetNetwork::new(cfg.network.clone(), mesh.code_dim(), cfg.seed)?;
                OffsetModel::dynamic(net, &binding.canonical_anchors(&mesh)?)
            }
            OffsetMode::Static => OffsetModel::fixed(binding.len(), mesh.code_dim()),
        };
        Ok(Self {
            mesh,
            binding,
            field,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.field.len()
    }

    pub fn is_empty(&self) -> bool {
        self.field.is_empty()
    }

    pub fn psi_dim(&self) -> usize {
        self.mesh.code_dim()
    }

    /// Checks that the parts agree with each other.
    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        for (what, n) in [("binding samples", self.binding.len()), ("offset rows", self.offsets.len())] {
            if n != self.field.len() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: self.field.len(),
                    actual: n,
                });
            }
        }
        if self.offsets.psi_dim() != self.mesh.code_dim() {
            return Err(Error::DimensionMismatch {
                what: "offset model expression input",
                expected: self.mesh.code_dim(),
                actual: self.offsets.psi_dim(),
            });
        }
        Ok(())
    }

    /// Learnable tensors in a fixed order: rotation, scale, opacity, sh, then offset tensors.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["rotation", "scale", "opacity", "sh"].map(String::from).into();
        names.extend((0..self.offsets.parameters().len()).map(|k| format!("offset.{k}")));
        names
    }

    pub fn parameters(&self) -> Vec<&[Real]> {
        let mut out: Vec<&[Real]> = vec![
            self.field.rotations.as_flattened(),
            self.field.log_scales.as_flattened(),
            &self.field.opacity_logits,
            &self.field.sh,
        ];
        out.extend(self.offsets.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [Real]> {
        let mut out: Vec<&mut [Real]> = vec![
            self.field.rotations.as_flattened_mut(),
            self.field.log_scales.as_flattened_mut(),
            &mut self.field.opacity_logits,
            &mut self.field.sh,
        ];
        out.extend(self.offsets.parameters_mut());
        out
    }

    pub fn pose(&self, psi: &[Real]) -> Result<Posed> {
        let vertices = self.mesh.evaluate(&ExpressionCode(psi.to_vec()))?;
        let anchors = self.binding.anchors(&vertices)?;
        let pass = self.offsets.predict(psi)?;
        let composed = compose(&self.field, &anchors, &pass.residuals)?;
        Ok(Posed {
            anchors,
            pass,
            composed,
        })
    }

    pub fn render(&self, psi: &[Real], camera: &Camera, settings: &RenderSettings) -> Result<(Rendered, Posed)> {
        let posed = self.pose(psi)?;
        let out = render(&posed.composed.scene(&self.field), camera, settings)?;
        Ok((out, posed))
    }
}

fn multipliers(cfg: &TrainConfig) -> RegionMultipliers {
    RegionMultipliers {
        mouth: cfg.mouth_multiplier,
    }
}
