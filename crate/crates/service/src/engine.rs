//! The avatar plus the validation and rendering the service performs on it.

use std::time::Instant;

use meshsplat_client::protocol::{CameraParams, LayoutBlock, LayoutInfo, StateMessage};
use meshsplat_core::avatar::Avatar;
use meshsplat_core::gaussians::{Camera, Orbit};
use meshsplat_core::image::Image;
use meshsplat_core::math::{Real, Vec3};
use meshsplat_core::render::RenderSettings;

/// A rejected request.
#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub message: String,
    pub expected_psi_len: Option<usize>,
}

impl Rejection {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            expected_psi_len: None,
        }
    }
}

pub struct Engine {
    avatar: Avatar,
    width: u32,
    height: u32,
}

pub struct EngineFrame {
    pub image: Image,
    pub ms: f64,
}

fn orbit(c: &CameraParams) -> Orbit {
    Orbit {
        radius: c.radius as Real,
        elevation_deg: c.elevation_deg as Real,
        azimuth_deg: c.azimuth_deg as Real,
        fov_deg: c.fov_deg as Real,
    }
}

impl Engine {
    pub fn new(avatar: Avatar, width: u32, height: u32) -> Self {
        Self {
            avatar,
            width,
            height,
        }
    }

    pub fn avatar(&self) -> &Avatar {
        &self.avatar
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn layout(&self) -> LayoutInfo {
        let mut offset = 0;
        let blocks = self
            .avatar
            .mesh
            .layout
            .blocks
            .iter()
            .map(|b| {
                let block = LayoutBlock {
                    name: b.name.clone(),
                    offset,
                    size: b.size,
                };
                offset += b.size;
                block
            })
            .collect();
        LayoutInfo {
            psi_dim: self.avatar.psi_dim(),
            blocks,
            gaussians: self.avatar.len(),
            sh_degree: self.avatar.field.sh_degree,
            offset_mode: format!("{:?}", self.avatar.offsets.mode()).to_lowercase(),
            width: self.width,
            height: self.height,
        }
    }

    /// Checks a state without rendering it.
    pub fn check(&self, state: &StateMessage) -> Result<(), Rejection> {
        self.camera(&state.camera, self.width, self.height)?;
        self.check_inputs(&state.psi, &state.background)
    }

    fn check_inputs(&self, psi: &[f64], background: &[f64; 3]) -> Result<(), Rejection> {
        let dim = self.avatar.psi_dim();
        if psi.len() != dim {
            return Err(Rejection {
                message: format!("psi has {} values, this avatar expects {dim}", psi.len()),
                expected_psi_len: Some(dim),
            });
        }
        if psi.iter().chain(background).any(|v| !v.is_finite()) {
            return Err(Rejection::new("psi and background must be finite"));
        }
        Ok(())
    }

    fn camera(&self, c: &CameraParams, width: u32, height: u32) -> Result<Camera, Rejection> {
        if width == 0 || height == 0 || width > 4096 || height > 4096 {
            return Err(Rejection::new(format!("unsupported frame size {width}x{height}")));
        }
        Camera::orbit(Vec3::zeros(), &orbit(c), width, height).map_err(|e| Rejection::new(e.to_string()))
    }

    pub fn render(
        &self,
        psi: &[f64],
        camera: &CameraParams,
        background: [f64; 3],
        size: Option<(u32, u32)>,
    ) -> Result<EngineFrame, Rejection> {
        let (w, h) = size.unwrap_or((self.width, self.height));
        let cam = self.camera(camera, w, h)?;
        self.check_inputs(psi, &background)?;
        let psi: Vec<Real> = psi.iter().map(|&v| v as Real).collect();
        let settings = RenderSettings {
            background: background.map(|v| v as Real),
        };
        let start = Instant::now();
        let (out, _) = self
            .avatar
            .render(&psi, &cam, &settings)
            .map_err(|e| Rejection::new(e.to_string()))?;
        Ok(EngineFrame {
            image: out.frame.image,
            ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }
}
