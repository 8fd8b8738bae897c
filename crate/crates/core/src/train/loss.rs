use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::math::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub huber_delta: Real,
    pub mouth_weight: Real,
    /// Perceptual weight before `perceptual_start_step`.
    pub perceptual_weight_early: Real,
    pub perceptual_weight: Real,
    pub perceptual_start_step: u64,
    pub perceptual_metric: String,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            huber_delta: 0.1,
            mouth_weight: 40.0,
            perceptual_weight_early: 0.0,
            perceptual_weight: 0.05,
            perceptual_start_step: 15_000,
            perceptual_metric: super::perceptual::DEFAULT_METRIC.into(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.huber_delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "huber_delta must be positive, got {}",
                self.huber_delta
            )));
        }
        for (name, w) in [
            ("mouth_weight", self.mouth_weight),
            ("perceptual_weight_early", self.perceptual_weight_early),
            ("perceptual_weight", self.perceptual_weight),
        ] {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn perceptual_weight_at(&self, step: u64) -> Real {
        if step < self.perceptual_start_step {
            self.perceptual_weight_early
        } else {
            self.perceptual_weight
        }
    }
}

/// Huber penalty of a residual: quadratic inside `delta`, linear outside.
#[inline]
pub fn huber(r: Real, delta: Real) -> Real {
    let a = r.abs();
    if a < delta {
        0.5 * a * a
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[inline]
pub fn huber_derivative(r: Real, delta: Real) -> Real {
    if r.abs() < delta {
        r
    } else {
        delta * r.signum()
    }
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::InvalidArgument(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean per-channel Huber between `target` and `pred`, with its gradient w.r.t. `pred`.
pub fn huber_loss(target: &Image, pred: &Image, delta: Real) -> Result<(Real, Image)> {
    check_same(target, pred)?;
    let n = pred.data.len() as Real;
    let mut grad = Image::new(pred.width, pred.height);
    let mut total = 0.0;
    for ((g, &p), &t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        total += huber(p - t, delta);
        *g = huber_derivative(p - t, delta) / n;
    }
    Ok((total / n, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhotometricTerms {
    pub huber: Real,
    /// Unweighted mouth-masked Huber.
    pub mouth: Real,
}

/// `H(I, I') + w_mouth * H(I*M, I'*M)`, both averaged over every pixel and channel.
pub fn photometric_loss(
    target: &Image,
    pred: &Image,
    mouth_mask: Option<&Mask>,
    cfg: &LossConfig,
) -> Result<(PhotometricTerms, Image)> {
    let (h, mut grad) = huber_loss(target, pred, cfg.huber_delta)?;
    let mut terms = PhotometricTerms { huber: h, mouth: 0.0 };
    let Some(mask) = mouth_mask else {
        return Ok((terms, grad));
    };
    if mask.width != pred.width || mask.height != pred.height {
        return Err(Error::InvalidArgument(format!(
            "mouth mask is {}x{}, image is {}x{}",
            mask.width, mask.height, pred.width, pred.height
        )));
    }
    let n = pred.data.len() as Real;
    let mut total = 0.0;
    for (k, g) in grad.data.iter_mut().enumerate() {
        let m = mask.data[k / 3];
        if m == 0.0 {
            continue;
        }
        let r = (pred.data[k] - target.data[k]) * m;
        total += huber(r, cfg.huber_delta);
        *g += cfg.mouth_weight * huber_derivative(r, cfg.huber_delta) * m / n;
    }
    terms.mouth = total / n;
    Ok((terms, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_values() {
        assert!((huber(0.05, 0.1) - 0.00125).abs() < 1e-15);
        assert!((huber(-0.2, 0.1) - 0.015).abs() < 1e-15);
        assert!((huber(0.1, 0.1) - 0.005).abs() < 1e-15);
        assert!((0.5 * 0.1 * 0.1 - 0.005 as Real).abs() < 1e-15);
    }

    #[test]
    fn identical_images_have_zero_loss_and_gradient() {
        let img = Image::filled(4, 4, [0.3, 0.2, 0.9]);
        let mut mask = Mask::zeros(4, 4);
        mask.data[5] = 1.0;
        let (t, g) = photometric_loss(&img, &img, Some(&mask), &LossConfig::default()).unwrap();
        assert_eq!(t.huber + t.mouth, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_mask_reduces_to_plain_huber() {
        let a = Image::filled(4, 4, [0.3, 0.2, 0.9]);
        let b = Image::filled(4, 4, [0.5, 0.0, 0.1]);
        let cfg = LossConfig::default();
        let (t, g) = photometric_loss(&a, &b, Some(&Mask::zeros(4, 4)), &cfg).unwrap();
        let (h, gh) = huber_loss(&a, &b, cfg.huber_delta).unwrap();
        assert_eq!(t.huber, h);
        assert_eq!(t.mouth, 0.0);
        assert_eq!(g, gh);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, h) = (6, 5);
        let mut rand_img = || Image {
            width: w,
            height: h,
            data: (0..3 * w * h).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        let target = rand_img();
        let pred = rand_img();
        let mask = Mask {
            width: w,
            height: h,
            data: (0..w * h).map(|k| if k % 3 == 0 { 0.0 } else { (k % 7) as Real / 7.0 }).collect(),
        };
        let cfg = LossConfig::default();
        let total = |p: &Image| {
            let (t, _) = photometric_loss(&target, p, Some(&mask), &cfg).unwrap();
            t.huber + cfg.mouth_weight * t.mouth
        };
        let (_, grad) = photometric_loss(&target, &pred, Some(&mask), &cfg).unwrap();
        let step = 1e-7;
        for k in 0..pred.data.len() {
            let mut p = pred.clone();
            let mut m = pred.clone();
            p.data[k] += step;
            m.data[k] -= step;
            let fd = (total(&p) - total(&m)) / (2.0 * step);
            assert!((fd - grad.data[k]).abs() < 1e-6, "k={k}: fd {fd} vs {}", grad.data[k]);
        }
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = Image::new(4, 4);
        let b = Image::new(4, 5);
        assert!(huber_loss(&a, &b, 0.1).is_err());
        let cfg = LossConfig::default();
        assert!(photometric_loss(&a, &a, Some(&Mask::zeros(2, 2)), &cfg).is_err());
    }

    #[test]
    fn schedule_switches_at_start_step() {
        let cfg = LossConfig::default();
        assert_eq!(cfg.perceptual_weight_at(0), 0.0);
        assert_eq!(cfg.perceptual_weight_at(14_999), 0.0);
        assert_eq!(cfg.perceptual_weight_at(15_000), 0.05);
    }
}
