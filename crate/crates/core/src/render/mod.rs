//! Differentiable tile-based Gaussian splatting.
//!
//! Forward: project every Gaussian, bin its screen footprint into 16x16 tiles,
//! sort each tile's list by depth (Gaussian index breaks ties), then composite
//! front to back per pixel. Backward re-traverses each pixel's list back to
//! front, recovering transmittance by division instead of storing per-pixel
//! contributor lists.

mod bench;
pub mod oracle;

pub use bench::{benchmark, random_scene, BenchmarkReport, BenchmarkRow, RandomScene};

use std::time::Instant;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussians::{
    covariance_3d, cull_radius, evaluate_sh, evaluate_sh_backward, project_covariance,
    projection_jacobian, sh_coeff_count, Camera, ALPHA_CUTOFF,
};
use crate::image::Image;
use crate::math::{quat_to_mat, quat_to_mat_backward, sigmoid, Mat3, Quat, Real, Vec3};

pub const TILE_SIZE: u32 = 16;
/// Per-splat alpha ceiling.
pub const MAX_ALPHA: Real = 0.99;
/// Compositing stops once transmittance falls below this.
pub const MIN_TRANSMITTANCE: Real = 1e-4;

/// Posed Gaussian attributes handed to the rasterizer.
#[derive(Clone, Copy, Debug)]
pub struct SplatScene<'a> {
    pub means: &'a [Vec3],
    pub rotations: &'a [Quat],
    /// Activated (positive) scales.
    pub scales: &'a [Vec3],
    pub opacity_logits: &'a [Real],
    /// `[gaussian][coeff][channel]`.
    pub sh: &'a [Real],
    pub sh_degree: u32,
}

impl SplatScene<'_> {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn sh_stride(&self) -> usize {
        3 * sh_coeff_count(self.sh_degree)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.means.len();
        for (what, len) in [
            ("rotations", self.rotations.len()),
            ("scales", self.scales.len()),
            ("opacities", self.opacity_logits.len()),
            ("sh coefficients", self.sh.len() / self.sh_stride().max(1)),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        if self.sh.len() != n * self.sh_stride() {
            return Err(Error::DimensionMismatch {
                what: "sh coefficients",
                expected: n * self.sh_stride(),
                actual: self.sh.len(),
            });
        }
        let stride = self.sh_stride();
        for i in 0..n {
            let bad = if !self.means[i].iter().all(|v| v.is_finite()) {
                Some("mean")
            } else if !self.rotations[i].iter().all(|v| v.is_finite()) {
                Some("rotation")
            } else if !self.scales[i].iter().all(|v| v.is_finite() && *v > 0.0) {
                Some("scale")
            } else if !self.opacity_logits[i].is_finite() {
                Some("opacity")
            } else if !self.sh[i * stride..(i + 1) * stride].iter().all(|v| v.is_finite()) {
                Some("sh")
            } else {
                None
            };
            if let Some(attribute) = bad {
                return Err(Error::NonFinite { index: i, attribute });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RenderSettings {
    pub background: [Real; 3],
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [1.0, 1.0, 1.0],
        }
    }
}

/// Screen-space splat of one visible Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedSplat {
    pub mean: [Real; 2],
    /// Upper triangle `(a, b, c)` of the 2D covariance.
    pub cov: [Real; 3],
    /// Upper triangle of the inverse covariance.
    pub conic: [Real; 3],
    pub depth: Real,
    pub color: [Real; 3],
    pub clamped: [bool; 3],
    pub opacity: Real,
    pub radius: Real,
    /// Inclusive pixel bounds `[x0, y0, x1, y1]`.
    pub bounds: [u32; 4],
}

/// Projects Gaussian `i`, or `None` when it is culled or entirely off screen.
pub fn project_splat(scene: &SplatScene, cam: &Camera, i: usize) -> Option<ProjectedSplat> {
    let mean = scene.means[i];
    let t = cam.to_camera(&mean);
    let k = &cam.intrinsics;
    let cov = project_covariance(&covariance_3d(&scene.rotations[i], &scene.scales[i]), &t, cam)?;
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let radius = cull_radius(&cov);
    let u = k.fx * t.x / t.z + k.cx;
    let v = k.fy * t.y / t.z + k.cy;

    let (w, h) = (cam.width as Real, cam.height as Real);
    let x0 = (u - radius).ceil().max(0.0);
    let x1 = (u + radius).floor().min(w - 1.0);
    let y0 = (v - radius).ceil().max(0.0);
    let y1 = (v + radius).floor().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }

    let dir = (mean - cam.center()).normalize();
    let stride = scene.sh_stride();
    let (color, clamped) = evaluate_sh(
        scene.sh_degree,
        &scene.sh[i * stride..(i + 1) * stride],
        &dir,
    );
    Some(ProjectedSplat {
        mean: [u, v],
        cov: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: t.z,
        color,
        clamped,
        opacity: sigmoid(scene.opacity_logits[i]),
        radius,
        bounds: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
    })
}

/// Alpha of a splat at a pixel, `None` when it does not contribute. Returns
/// `(alpha, density, unclamped alpha)`.
#[inline]
pub(crate) fn splat_alpha(s: &ProjectedSplat, px: Real, py: Real) -> Option<(Real, Real, Real)> {
    let dx = px - s.mean[0];
    let dy = py - s.mean[1];
    let power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    if power > 0.0 {
        return None;
    }
    let g = power.exp();
    let raw = s.opacity * g;
    let alpha = raw.min(MAX_ALPHA);
    (alpha >= ALPHA_CUTOFF).then_some((alpha, g, raw))
}

/// Result of compositing one pixel.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PixelResult {
    pub color: [Real; 3],
    pub transmittance: Real,
    /// One past the last list position that was blended.
    pub last: u32,
    pub count: u32,
}

/// Front-to-back compositing over a depth-ordered list of splat ids.
#[inline]
pub(crate) fn composite_pixel(
    splats: &[Option<ProjectedSplat>],
    order: impl Iterator<Item = u32>,
    px: Real,
    py: Real,
) -> PixelResult {
    let mut t = 1.0;
    let mut color = [0.0; 3];
    let mut last = 0;
    let mut count = 0;
    for (k, id) in order.enumerate() {
        let s = splats[id as usize].as_ref().expect("listed splats are visible");
        let Some((alpha, _, _)) = splat_alpha(s, px, py) else {
            continue;
        };
        for ch in 0..3 {
            color[ch] += s.color[ch] * alpha * t;
        }
        t *= 1.0 - alpha;
        last = k as u32 + 1;
        count += 1;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    PixelResult {
        color,
        transmittance: t,
        last,
        count,
    }
}

/// Final pixel value: composited colour over the background, capped at 1.
#[inline]
pub(crate) fn resolve_pixel(p: &PixelResult, bg: &[Real; 3]) -> ([Real; 3], [bool; 3]) {
    let mut out = [0.0; 3];
    let mut saturated = [false; 3];
    for ch in 0..3 {
        let v = p.color[ch] + p.transmittance * bg[ch];
        saturated[ch] = v > 1.0;
        out[ch] = v.min(1.0);
    }
    (out, saturated)
}

/// Rendered image plus per-pixel diagnostics.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub image: Image,
    /// Transmittance left after the last blended splat.
    pub transmittance: Vec<Real>,
    /// Number of splats blended into each pixel.
    pub contributors: Vec<u32>,
}

impl RenderedFrame {
    /// Per-pixel `sum(alpha_i T_i) + T_final` recomputed from the stored state.
    pub fn composited_weight(&self, state: &ForwardState, px: u32, py: u32) -> Real {
        let tiles_x = state.width.div_ceil(TILE_SIZE);
        let tile = (py / TILE_SIZE) * tiles_x + px / TILE_SIZE;
        let (start, end) = state.tile_ranges[tile as usize];
        let pix = (py * state.width + px) as usize;
        let mut t = 1.0;
        let mut total = 0.0;
        for &id in &state.tile_ids[start as usize..end as usize][..state.last[pix] as usize] {
            let s = state.splats[id as usize].as_ref().unwrap();
            if let Some((alpha, _, _)) = splat_alpha(s, px as Real, py as Real) {
                total += alpha * t;
                t *= 1.0 - alpha;
            }
        }
        total + self.transmittance[pix]
    }
}

/// Everything the backward pass needs from a forward render.
#[derive(Clone, Debug)]
pub struct ForwardState {
    pub gaussian_count: usize,
    pub width: u32,
    pub height: u32,
    pub background: [Real; 3],
    pub splats: Vec<Option<ProjectedSplat>>,
    /// Concatenated per-tile depth-sorted Gaussian ids.
    pub tile_ids: Vec<u32>,
    /// `[start, end)` into `tile_ids` for every tile.
    pub tile_ranges: Vec<(u32, u32)>,
    pub last: Vec<u32>,
    pub saturated: Vec<[bool; 3]>,
    pub final_transmittance: Vec<Real>,
}

#[derive(Clone, Debug)]
pub struct Rendered {
    pub frame: RenderedFrame,
    pub state: ForwardState,
    pub timings: StageTimings,
}

#[derive(Clone, Copy, Debug, Default, serde::Serialize)]
pub struct StageTimings {
    pub project_ms: f64,
    pub sort_ms: f64,
    pub raster_ms: f64,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Sort key: tile id, then depth, then Gaussian index.
#[inline]
fn tile_key(tile: u32, depth: Real, id: u32) -> u128 {
    ((tile as u128) << 96) | (((depth as f64).to_bits() as u128) << 32) | id as u128
}

/// Projection for every Gaussian (parallel over Gaussians).
pub fn project_all(scene: &SplatScene, cam: &Camera) -> Vec<Option<ProjectedSplat>> {
    (0..scene.len())
        .into_par_iter()
        .map(|i| project_splat(scene, cam, i))
        .collect()
}

pub fn render(scene: &SplatScene, cam: &Camera, settings: &RenderSettings) -> Result<Rendered> {
    scene.validate()?;
    let (w, h) = (cam.width, cam.height);
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);

    let t0 = Instant::now();
    let splats = project_all(scene, cam);
    let project_ms = ms_since(t0);

    let t1 = Instant::now();
    let mut keys: Vec<u128> = Vec::new();
    for (id, s) in splats.iter().enumerate() {
        let Some(s) = s else { continue };
        let [x0, y0, x1, y1] = s.bounds;
        for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
            for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                keys.push(tile_key(ty * tiles_x + tx, s.depth, id as u32));
            }
        }
    }
    keys.par_sort_unstable();
    let tile_count = (tiles_x * tiles_y) as usize;
    let tile_ids: Vec<u32> = keys.iter().map(|k| *k as u32).collect();
    let mut tile_ranges = vec![(0u32, 0u32); tile_count];
    let mut start = 0usize;
    while start < keys.len() {
        let tile = (keys[start] >> 96) as usize;
        let mut end = start;
        while end < keys.len() && (keys[end] >> 96) as usize == tile {
            end += 1;
        }
        tile_ranges[tile] = (start as u32, end as u32);
        start = end;
    }
    let sort_ms = ms_since(t1);

    let t2 = Instant::now();
    let bg = settings.background;
    let tiles: Vec<Vec<(u32, PixelResult)>> = (0..tile_count)
        .into_par_iter()
        .map(|tile| {
            let (tx, ty) = (tile as u32 % tiles_x, tile as u32 / tiles_x);
            let (s, e) = tile_ranges[tile];
            let ids = &tile_ids[s as usize..e as usize];
            let mut out = Vec::with_capacity((TILE_SIZE * TILE_SIZE) as usize);
            for py in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                for px in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let r = composite_pixel(&splats, ids.iter().copied(), px as Real, py as Real);
                    out.push((py * w + px, r));
                }
            }
            out
        })
        .collect();

    let npix = (w * h) as usize;
    let mut image = Image::new(w, h);
    let mut transmittance = vec![0.0; npix];
    let mut contributors = vec![0; npix];
    let mut last = vec![0; npix];
    let mut saturated = vec![[false; 3]; npix];
    for (pix, r) in tiles.into_iter().flatten() {
        let pix = pix as usize;
        let (rgb, sat) = resolve_pixel(&r, &bg);
        image.data[3 * pix..3 * pix + 3].copy_from_slice(&rgb);
        transmittance[pix] = r.transmittance;
        contributors[pix] = r.count;
        last[pix] = r.last;
        saturated[pix] = sat;
    }
    let raster_ms = ms_since(t2);

    Ok(Rendered {
        frame: RenderedFrame {
            image,
            transmittance: transmittance.clone(),
            contributors,
        },
        state: ForwardState {
            gaussian_count: scene.len(),
            width: w,
            height: h,
            background: bg,
            splats,
            tile_ids,
            tile_ranges,
            last,
            saturated,
            final_transmittance: transmittance,
        },
        timings: StageTimings {
            project_ms,
            sort_ms,
            raster_ms,
        },
    })
}

/// Gradients of a scalar loss w.r.t. every rasterizer input.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradients {
    pub means: Vec<Vec3>,
    /// W.r.t. the raw quaternion as passed in (normalization included).
    pub rotations: Vec<Quat>,
    /// W.r.t. activated scales.
    pub scales: Vec<Vec3>,
    pub opacity_logits: Vec<Real>,
    pub sh: Vec<Real>,
}

impl SplatGradients {
    pub fn zeros(n: usize, sh_stride: usize) -> Self {
        Self {
            means: vec![Vec3::zeros(); n],
            rotations: vec![[0.0; 4]; n],
            scales: vec![Vec3::zeros(); n],
            opacity_logits: vec![0.0; n],
            sh: vec![0.0; n * sh_stride],
        }
    }
}

/// Screen-space gradient accumulated per splat: mean (2), conic (3), opacity, colour (3).
type ScreenGrad = [Real; 9];

/// Reverse pass of [`render`] for upstream gradient `grad_image` (same layout
/// as the rendered image). Accumulation is deterministic: tiles are merged in
/// tile order.
pub fn render_backward(
    scene: &SplatScene,
    cam: &Camera,
    state: &ForwardState,
    grad_image: &Image,
) -> Result<SplatGradients> {
    if state.gaussian_count != scene.len() {
        return Err(Error::ForwardStateMismatch(format!(
            "state has {} gaussians, scene has {}",
            state.gaussian_count,
            scene.len()
        )));
    }
    if state.width != cam.width || state.height != cam.height {
        return Err(Error::ForwardStateMismatch(format!(
            "state is {}x{}, camera is {}x{}",
            state.width, state.height, cam.width, cam.height
        )));
    }
    if grad_image.width != cam.width || grad_image.height != cam.height {
        return Err(Error::ForwardStateMismatch("gradient image size differs".into()));
    }
    let (w, h) = (state.width, state.height);
    let tiles_x = w.div_ceil(TILE_SIZE);
    let bg = state.background;

    let per_tile: Vec<Vec<ScreenGrad>> = state
        .tile_ranges
        .par_iter()
        .enumerate()
        .map(|(tile, &(s, e))| {
            let ids = &state.tile_ids[s as usize..e as usize];
            let mut acc = vec![[0.0; 9]; ids.len()];
            if ids.is_empty() {
                return acc;
            }
            let (tx, ty) = (tile as u32 % tiles_x, tile as u32 / tiles_x);
            for py in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                for px in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let pix = (py * w + px) as usize;
                    let mut g = [0.0; 3];
                    for ch in 0..3 {
                        if !state.saturated[pix][ch] {
                            g[ch] = grad_image.data[3 * pix + ch];
                        }
                    }
                    if g == [0.0; 3] {
                        continue;
                    }
                    pixel_backward(state, ids, &mut acc, px, py, pix, g, &bg);
                }
            }
            acc
        })
        .collect();

    let n = scene.len();
    let mut screen = vec![[0.0; 9]; n];
    for (&(s, e), acc) in state.tile_ranges.iter().zip(&per_tile) {
        for (id, gr) in state.tile_ids[s as usize..e as usize].iter().zip(acc) {
            let dst = &mut screen[*id as usize];
            for k in 0..9 {
                dst[k] += gr[k];
            }
        }
    }

    let stride = scene.sh_stride();
    let per_gaussian: Vec<(Vec3, Quat, Vec3, Real, Vec<Real>)> = (0..n)
        .into_par_iter()
        .map(|i| match &state.splats[i] {
            Some(splat) => gaussian_backward(scene, cam, i, splat, &screen[i]),
            None => (Vec3::zeros(), [0.0; 4], Vec3::zeros(), 0.0, vec![0.0; stride]),
        })
        .collect();

    let mut grads = SplatGradients::zeros(n, stride);
    for (i, (gm, gq, gs, go, gsh)) in per_gaussian.into_iter().enumerate() {
        grads.means[i] = gm;
        grads.rotations[i] = gq;
        grads.scales[i] = gs;
        grads.opacity_logits[i] = go;
        grads.sh[i * stride..(i + 1) * stride].copy_from_slice(&gsh);
    }
    Ok(grads)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn pixel_backward(
    state: &ForwardState,
    ids: &[u32],
    acc: &mut [ScreenGrad],
    px: u32,
    py: u32,
    pix: usize,
    g: [Real; 3],
    bg: &[Real; 3],
) {
    let (pxf, pyf) = (px as Real, py as Real);
    let t_final = state.final_transmittance[pix];
    let bg_dot = bg[0] * g[0] + bg[1] * g[1] + bg[2] * g[2];
    let mut t = t_final;
    let mut accum = [0.0; 3];
    let mut last_alpha = 0.0;
    let mut last_color = [0.0; 3];
    for k in (0..state.last[pix] as usize).rev() {
        let s = state.splats[ids[k] as usize].as_ref().unwrap();
        let Some((alpha, density, raw)) = splat_alpha(s, pxf, pyf) else {
            continue;
        };
        t /= 1.0 - alpha;
        let weight = alpha * t;
        let mut d_alpha = 0.0;
        let out = &mut acc[k];
        for ch in 0..3 {
            accum[ch] = last_alpha * last_color[ch] + (1.0 - last_alpha) * accum[ch];
            last_color[ch] = s.color[ch];
            d_alpha += (s.color[ch] - accum[ch]) * g[ch];
            out[6 + ch] += weight * g[ch];
        }
        d_alpha *= t;
        last_alpha = alpha;
        d_alpha -= t_final / (1.0 - alpha) * bg_dot;
        if raw > MAX_ALPHA {
            continue;
        }
        // alpha = opacity * exp(power)
        out[5] += density * d_alpha;
        let d_power = s.opacity * density * d_alpha;
        let dx = pxf - s.mean[0];
        let dy = pyf - s.mean[1];
        let [ca, cb, cc] = s.conic;
        out[0] += d_power * (ca * dx + cb * dy);
        out[1] += d_power * (cc * dy + cb * dx);
        out[2] += d_power * (-0.5 * dx * dx);
        out[3] += d_power * (-dx * dy);
        out[4] += d_power * (-0.5 * dy * dy);
    }
}

/// Pulls screen-space gradients of one splat back to its 3D attributes.
fn gaussian_backward(
    scene: &SplatScene,
    cam: &Camera,
    i: usize,
    splat: &ProjectedSplat,
    sg: &ScreenGrad,
) -> (Vec3, Quat, Vec3, Real, Vec<Real>) {
    let stride = scene.sh_stride();
    let mean = scene.means[i];
    let k = &cam.intrinsics;
    let (fx, fy) = (k.fx, k.fy);
    let rw = cam.rotation;
    let t = cam.to_camera(&mean);

    // opacity
    let o = splat.opacity;
    let g_logit = sg[5] * o * (1.0 - o);

    // colour -> SH and view direction
    let mut g_sh = vec![0.0; stride];
    let offset = mean - cam.center();
    let dist = offset.norm();
    let dir = offset / dist;
    let g_dir = evaluate_sh_backward(
        scene.sh_degree,
        &scene.sh[i * stride..(i + 1) * stride],
        &dir,
        splat.clamped,
        [sg[6], sg[7], sg[8]],
        &mut g_sh,
    );
    let mut g_mean = (g_dir - dir * dir.dot(&g_dir)) / dist;

    // conic -> 2D covariance
    let conic = Matrix2::new(splat.conic[0], splat.conic[1], splat.conic[1], splat.conic[2]);
    let g_conic = Matrix2::new(sg[2], 0.5 * sg[3], 0.5 * sg[3], sg[4]);
    let g_cov2 = -(conic * g_conic * conic);

    // 2D covariance -> 3D covariance and Jacobian
    let r = quat_to_mat(&scene.rotations[i]);
    let m = r * Mat3::from_diagonal(&scene.scales[i]);
    let sigma = m * m.transpose();
    let j = projection_jacobian(&t, fx, fy);
    let tm = j * rw;
    let g_sigma = tm.transpose() * g_cov2 * tm;
    let g_tm = 2.0 * g_cov2 * tm * sigma;
    let g_j = g_tm * rw.transpose();

    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut g_t = Vec3::new(
        g_j[(0, 2)] * (-fx * iz2),
        g_j[(1, 2)] * (-fy * iz2),
        g_j[(0, 0)] * (-fx * iz2)
            + g_j[(0, 2)] * (2.0 * fx * t.x * iz3)
            + g_j[(1, 1)] * (-fy * iz2)
            + g_j[(1, 2)] * (2.0 * fy * t.y * iz3),
    );
    // 2D mean
    let (gu, gv) = (sg[0], sg[1]);
    g_t.x += gu * fx * iz;
    g_t.y += gv * fy * iz;
    g_t.z += -gu * fx * t.x * iz2 - gv * fy * t.y * iz2;
    g_mean += rw.transpose() * g_t;

    // 3D covariance -> scale and rotation
    let g_m = 2.0 * g_sigma * m;
    let s = scene.scales[i];
    let mut g_scale = Vec3::zeros();
    let mut g_r = Mat3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            g_scale[col] += g_m[(row, col)] * r[(row, col)];
            g_r[(row, col)] = g_m[(row, col)] * s[col];
        }
    }
    let g_q = quat_to_mat_backward(&scene.rotations[i], &g_r);
    (g_mean, g_q, g_scale, g_logit, g_sh)
}

#[cfg(test)]
mod tests;
