//! Ground-truth renders for synthetic training runs: a denser, fully opaque
//! Gaussian field bound to the same mesh, optionally pushed around by a
//! hidden expression-dependent displacement the mesh itself cannot express.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::procedural_color;
use crate::dataset::TrainingFrame;
use crate::error::Result;
use crate::gaussians::{local_sample_spacing, Camera, GaussianField, Orbit, SH_C0};
use crate::geometry::{BlendshapeMesh, ExpressionCode};
use crate::image::Image;
use crate::math::{logit, Real, Vec3};
use crate::render::{render, RenderSettings, SplatScene};
use crate::uv::{rasterize_uv, RegionMultipliers, SurfaceBinding};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundTruthConfig {
    pub uv_resolution: u32,
    pub color_frequency: Real,
    pub opacity: Real,
    /// Gaussian radius relative to the local sample spacing.
    pub scale_factor: Real,
    /// Magnitude of the hidden displacement; zero disables it.
    pub hidden_offset: Real,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            uv_resolution: 96,
            color_frequency: 3.0,
            opacity: 0.95,
            scale_factor: 1.0,
            hidden_offset: 0.0,
        }
    }
}

pub struct GroundTruth {
    pub mesh: BlendshapeMesh,
    pub binding: SurfaceBinding,
    pub field: GaussianField,
    canonical: Vec<Vec3>,
    cfg: GroundTruthConfig,
}

/// Displacement that depends non-linearly on the code, so no combination of
/// the mesh's linear bases reproduces it.
pub fn hidden_displacement(canonical: &Vec3, psi: &[Real], amplitude: Real) -> Vec3 {
    let get = |k: usize| psi.get(k).copied().unwrap_or(0.0);
    let drive = get(0) * get(1) + (2.0 * get(2)).sin() * get(0).abs();
    let n = canonical.normalize();
    let along = (3.0 * canonical.y).cos() * canonical.z.max(0.0);
    n * (amplitude * drive * along)
}

impl GroundTruth {
    pub fn build(mesh: BlendshapeMesh, cfg: &GroundTruthConfig) -> Result<Self> {
        let mult = RegionMultipliers::uniform();
        let binding = rasterize_uv(&mesh, cfg.uv_resolution as usize, &mesh.regions, mult)?;
        let spacing = local_sample_spacing(&binding, &mesh, mult);
        let mut field = GaussianField::initialize(&spacing, 0)?;
        let canonical = binding.canonical_anchors(&mesh)?;
        let o = logit(cfg.opacity);
        for i in 0..field.len() {
            field.opacity_logits[i] = o;
            let ls = (spacing[i] * cfg.scale_factor).ln();
            field.log_scales[i] = [ls; 3];
            let c = procedural_color(&canonical[i], cfg.color_frequency);
            for ch in 0..3 {
                field.sh[3 * i + ch] = (c[ch] - 0.5) / SH_C0;
            }
        }
        Ok(Self {
            mesh,
            binding,
            field,
            canonical,
            cfg: cfg.clone(),
        })
    }

    pub fn means(&self, psi: &[Real]) -> Result<Vec<Vec3>> {
        let verts = self.mesh.evaluate(&ExpressionCode(psi.to_vec()))?;
        let mut means = self.binding.anchors(&verts)?;
        if self.cfg.hidden_offset != 0.0 {
            for (m, c) in means.iter_mut().zip(&self.canonical) {
                *m += hidden_displacement(c, psi, self.cfg.hidden_offset);
            }
        }
        Ok(means)
    }

    pub fn render(&self, psi: &[Real], camera: &Camera, background: [Real; 3]) -> Result<Image> {
        let means = self.means(psi)?;
        let scales: Vec<Vec3> = self.field.log_scales.iter().map(|s| Vec3::from(s.map(Real::exp))).collect();
        let scene = SplatScene {
            means: &means,
            rotations: &self.field.rotations,
            scales: &scales,
            opacity_logits: &self.field.opacity_logits,
            sh: &self.field.sh,
            sh_degree: 0,
        };
        Ok(render(&scene, camera, &RenderSettings { background })?.frame.image)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    /// Expression coefficients are drawn uniformly from `[-psi_range, psi_range]`.
    pub psi_range: Real,
    pub camera_radius: Real,
    pub fov_deg: Real,
    pub max_elevation_deg: Real,
    pub background: [Real; 3],
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 200,
            width: 64,
            height: 64,
            psi_range: 1.0,
            camera_radius: 3.2,
            fov_deg: 40.0,
            max_elevation_deg: 25.0,
            background: [1.0; 3],
        }
    }
}

/// Random codes with a camera orbiting once around the head over the sequence.
pub fn synthetic_frames(
    gt: &GroundTruth,
    cfg: &SequenceConfig,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<TrainingFrame>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = gt.mesh.code_dim();
    let mut frames = Vec::with_capacity(cfg.frames);
    for k in 0..cfg.frames {
        let psi: Vec<Real> = (0..dim)
            .map(|_| rng.random_range(-cfg.psi_range..=cfg.psi_range))
            .collect();
        let orbit = Orbit {
            radius: cfg.camera_radius,
            elevation_deg: rng.random_range(-cfg.max_elevation_deg..=cfg.max_elevation_deg),
            azimuth_deg: 360.0 * (k as Real + rng.random_range(0.0..1.0)) / cfg.frames as Real - 180.0,
            fov_deg: cfg.fov_deg,
        };
        let camera = Camera::orbit(Vec3::zeros(), &orbit, cfg.width, cfg.height)?;
        let image = gt.render(&psi, &camera, cfg.background)?;
        frames.push(TrainingFrame {
            frame_id: format!("{id_prefix}{k:04}"),
            psi,
            camera,
            image,
            mouth_mask: None,
        });
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{SyntheticAvatar, SyntheticAvatarConfig};

    #[test]
    fn hidden_displacement_vanishes_at_zero_code() {
        let p = Vec3::new(0.0, 0.1, 0.9);
        assert_eq!(hidden_displacement(&p, &[0.0; 3], 0.1), Vec3::zeros());
        assert!(hidden_displacement(&p, &[1.0, 1.0, 0.0], 0.1).norm() > 0.0);
    }

    #[test]
    fn frames_are_reproducible_and_not_blank() {
        let mesh = SyntheticAvatar::build(&SyntheticAvatarConfig {
            subdivisions: 2,
            ..Default::default()
        })
        .mesh;
        let gt = GroundTruth::build(
            mesh,
            &GroundTruthConfig {
                uv_resolution: 32,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = SequenceConfig {
            frames: 3,
            width: 24,
            height: 24,
            ..Default::default()
        };
        let a = synthetic_frames(&gt, &cfg, 1, "t").unwrap();
        let b = synthetic_frames(&gt, &cfg, 1, "t").unwrap();
        assert_eq!(a[2].image, b[2].image);
        let centre = a[0].image.pixel(12, 12);
        assert!(centre.iter().any(|&v| v < 0.9), "centre pixel {centre:?} looks like background");
    }
}
