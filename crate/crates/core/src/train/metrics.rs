use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl Metrics {
    /// Per-image metrics averaged over a set (PSNR from the mean MSE).
    pub fn mean(items: &[Metrics]) -> Metrics {
        if items.is_empty() {
            return Metrics::default();
        }
        let n = items.len() as f64;
        let mse = items.iter().map(|m| m.mse).sum::<f64>() / n;
        Metrics {
            mse,
            l1: items.iter().map(|m| m.l1).sum::<f64>() / n,
            psnr: psnr_from_mse(mse),
            ssim: items.iter().map(|m| m.ssim).sum::<f64>() / n,
        }
    }
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

pub fn image_metrics(pred: &Image, target: &Image) -> Result<Metrics> {
    if !pred.same_size(target) {
        return Err(Error::InvalidArgument(format!(
            "metric images differ in size: {}x{} vs {}x{}",
            pred.width, pred.height, target.width, target.height
        )));
    }
    let n = pred.data.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (&a, &b) in pred.data.iter().zip(&target.data) {
        let d = (a - b) as f64;
        se += d * d;
        ae += d.abs();
    }
    let mse = se / n;
    Ok(Metrics {
        mse,
        l1: ae / n,
        psnr: psnr_from_mse(mse),
        ssim: ssim(pred, target),
    })
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over channels and valid 11x11 windows (Gaussian sigma 1.5, K1 0.01, K2 0.03).
/// Images smaller than the window use a window clipped to the image.
pub fn ssim(a: &Image, b: &Image) -> f64 {
    let (w, h) = (a.width as usize, a.height as usize);
    let size = 11.min(w).min(h);
    let win = gaussian_window(size, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let px = |img: &Image, x: usize, y: usize| img.data[3 * (y * w + x) + ch] as f64;
        for y0 in 0..=h - size {
            for x0 in 0..=w - size {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..size {
                    for i in 0..size {
                        let k = win[i] * win[j];
                        let (va, vb) = (px(a, x0 + i, y0 + j), px(b, x0 + i, y0 + j));
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}
