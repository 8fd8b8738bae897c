//! Pluggable perceptual distance. The built-in metric compares image
//! gradients and local patch statistics over three dyadic scales; it stands in
//! for a learned metric and is differentiable in closed form.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Real;

pub const DEFAULT_METRIC: &str = "gradient-stats";

pub trait PerceptualMetric: Send + Sync {
    fn name(&self) -> &str;

    /// Distance and its gradient w.r.t. `pred`.
    fn evaluate(&self, pred: &Image, target: &Image) -> Result<(Real, Image)>;

    fn distance(&self, a: &Image, b: &Image) -> Result<Real> {
        Ok(self.evaluate(a, b)?.0)
    }
}

/// Looks up a metric by name.
pub fn metric_by_name(name: &str) -> Result<Box<dyn PerceptualMetric>> {
    match name {
        DEFAULT_METRIC => Ok(Box::new(GradientStatsMetric::default())),
        other => Err(Error::InvalidArgument(format!(
            "unknown perceptual metric {other:?} (available: {DEFAULT_METRIC})"
        ))),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradientStatsMetric {
    pub scales: usize,
    pub patch: u32,
}

impl Default for GradientStatsMetric {
    fn default() -> Self {
        Self { scales: 3, patch: 8 }
    }
}

/// 2x2 average pooling, dropping a trailing odd row or column.
fn downsample(img: &Image) -> Image {
    let (w, h) = (img.width / 2, img.height / 2);
    let mut out = Image::new(w, h);
    for y in 0..h as usize {
        for x in 0..w as usize {
            for ch in 0..3 {
                let at = |xx: usize, yy: usize| img.data[3 * (yy * img.width as usize + xx) + ch];
                out.data[3 * (y * w as usize + x) + ch] = 0.25
                    * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
            }
        }
    }
    out
}

fn upsample_grad(g: &Image, width: u32, height: u32) -> Image {
    let mut out = Image::new(width, height);
    for y in 0..g.height as usize {
        for x in 0..g.width as usize {
            for ch in 0..3 {
                let v = 0.25 * g.data[3 * (y * g.width as usize + x) + ch];
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    out.data[3 * ((2 * y + dy) * width as usize + 2 * x + dx) + ch] += v;
                }
            }
        }
    }
    out
}

#[inline]
fn sign(v: Real) -> Real {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl GradientStatsMetric {
    /// Single-scale distance; accumulates its gradient into `grad`.
    fn level(&self, a: &Image, b: &Image, grad: &mut Image) -> Real {
        let (w, h) = (a.width as usize, a.height as usize);
        let idx = |x: usize, y: usize, ch: usize| 3 * (y * w + x) + ch;
        let mut total = 0.0;

        // forward-difference image gradients
        let nx = ((w.saturating_sub(1)) * h * 3).max(1) as Real;
        let ny = (w * (h.saturating_sub(1)) * 3).max(1) as Real;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    if x + 1 < w {
                        let (i0, i1) = (idx(x, y, ch), idx(x + 1, y, ch));
                        let d = (a.data[i1] - a.data[i0]) - (b.data[i1] - b.data[i0]);
                        total += d.abs() / nx;
                        grad.data[i1] += sign(d) / nx;
                        grad.data[i0] -= sign(d) / nx;
                    }
                    if y + 1 < h {
                        let (i0, i1) = (idx(x, y, ch), idx(x, y + 1, ch));
                        let d = (a.data[i1] - a.data[i0]) - (b.data[i1] - b.data[i0]);
                        total += d.abs() / ny;
                        grad.data[i1] += sign(d) / ny;
                        grad.data[i0] -= sign(d) / ny;
                    }
                }
            }
        }

        // patch mean and variance
        let p = (self.patch as usize).min(w).min(h);
        if p == 0 {
            return total;
        }
        let (px, py) = (w / p, h / p);
        let count = (px * py * 3) as Real;
        let area = (p * p) as Real;
        for by in 0..py {
            for bx in 0..px {
                for ch in 0..3 {
                    let pixels = || {
                        (0..p).flat_map(move |dy| (0..p).map(move |dx| idx(bx * p + dx, by * p + dy, ch)))
                    };
                    let mean = |img: &Image| pixels().map(|i| img.data[i]).sum::<Real>() / area;
                    let (ma, mb) = (mean(a), mean(b));
                    let var = |img: &Image, m: Real| {
                        pixels().map(|i| (img.data[i] - m).powi(2)).sum::<Real>() / area
                    };
                    let (va, vb) = (var(a, ma), var(b, mb));
                    let dm = ma - mb;
                    let dv = va - vb;
                    total += (dm * dm + dv * dv) / count;
                    for i in pixels() {
                        grad.data[i] += (2.0 * dm / area + 2.0 * dv * 2.0 * (a.data[i] - ma) / area) / count;
                    }
                }
            }
        }
        total
    }
}

impl PerceptualMetric for GradientStatsMetric {
    fn name(&self) -> &str {
        DEFAULT_METRIC
    }

    fn evaluate(&self, pred: &Image, target: &Image) -> Result<(Real, Image)> {
        if !pred.same_size(target) {
            return Err(Error::InvalidArgument(format!(
                "perceptual metric needs equal sizes, got {}x{} and {}x{}",
                pred.width, pred.height, target.width, target.height
            )));
        }
        let mut pyramid = vec![(pred.clone(), target.clone())];
        for _ in 1..self.scales {
            let (a, b) = pyramid.last().unwrap();
            if a.width < 2 || a.height < 2 {
                break;
            }
            pyramid.push((downsample(a), downsample(b)));
        }
        let levels = pyramid.len() as Real;
        let mut total = 0.0;
        let mut carried: Option<Image> = None;
        for (a, b) in pyramid.iter().rev() {
            let mut grad = match carried.take() {
                Some(g) => upsample_grad(&g, a.width, a.height),
                None => Image::new(a.width, a.height),
            };
            let mut local = Image::new(a.width, a.height);
            total += self.level(a, b, &mut local) / levels;
            for (g, l) in grad.data.iter_mut().zip(&local.data) {
                *g += l / levels;
            }
            carried = Some(grad);
        }
        Ok((total, carried.unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: u32, h: u32, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image {
            width: w,
            height: h,
            data: (0..3 * w * h).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    #[test]
    fn identical_images_are_at_distance_zero() {
        let m = GradientStatsMetric::default();
        let a = random(32, 32, 1);
        let (d, g) = m.evaluate(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset_is_detected() {
        let m = GradientStatsMetric::default();
        let a = random(16, 16, 2);
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v += 0.1);
        assert!(m.distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn symmetric() {
        let m = GradientStatsMetric::default();
        let (a, b) = (random(20, 12, 3), random(20, 12, 4));
        let d1 = m.distance(&a, &b).unwrap();
        let d2 = m.distance(&b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-12 * d1.max(1.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = GradientStatsMetric::default();
        let (a, b) = (random(32, 32, 5), random(32, 32, 6));
        let (_, g) = m.evaluate(&a, &b).unwrap();
        let h = 1e-7;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = rng.random_range(0..a.data.len());
            let mut p = a.clone();
            let mut q = a.clone();
            p.data[k] += h;
            q.data[k] -= h;
            let fd = (m.distance(&p, &b).unwrap() - m.distance(&q, &b).unwrap()) / (2.0 * h);
            assert!((fd - g.data[k]).abs() < 1e-5, "k={k}: fd {fd} vs {}", g.data[k]);
        }
    }

    #[test]
    fn unknown_metric_name_is_rejected() {
        assert!(metric_by_name("vgg").is_err());
        assert_eq!(metric_by_name(DEFAULT_METRIC).unwrap().name(), DEFAULT_METRIC);
    }
}
