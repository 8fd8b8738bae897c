//! Reference compositor: one global depth sort, then every pixel walks every
//! visible Gaussian. Slow by design; used to check the tiled renderer.

use nalgebra::Matrix2;

use super::{SplatScene, MAX_ALPHA, MIN_TRANSMITTANCE};
use crate::error::Result;
use crate::gaussians::{
    covariance_3d, evaluate_density, evaluate_sh, project_covariance, Camera, ALPHA_CUTOFF,
};
use crate::image::Image;
use crate::math::{sigmoid, Real};

struct Splat {
    u: Real,
    v: Real,
    conic: Matrix2<Real>,
    depth: Real,
    color: [Real; 3],
    opacity: Real,
    index: usize,
}

/// Image and final transmittance per pixel.
pub fn render_naive(
    scene: &SplatScene,
    cam: &Camera,
    background: [Real; 3],
) -> Result<(Image, Vec<Real>)> {
    scene.validate()?;
    let k = cam.intrinsics;
    let stride = scene.sh.len() / scene.len().max(1);
    let mut splats: Vec<Splat> = Vec::new();
    for i in 0..scene.len() {
        let t = cam.to_camera(&scene.means[i]);
        let sigma = covariance_3d(&scene.rotations[i], &scene.scales[i]);
        let Some(cov) = project_covariance(&sigma, &t, cam) else {
            continue;
        };
        let Some(conic) = cov.try_inverse() else {
            continue;
        };
        if cov.determinant() <= 0.0 {
            continue;
        }
        let dir = (scene.means[i] - cam.center()).normalize();
        let (color, _) = evaluate_sh(scene.sh_degree, &scene.sh[i * stride..(i + 1) * stride], &dir);
        splats.push(Splat {
            u: k.fx * t.x / t.z + k.cx,
            v: k.fy * t.y / t.z + k.cy,
            conic,
            depth: t.z,
            color,
            opacity: sigmoid(scene.opacity_logits[i]),
            index: i,
        });
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

    let mut image = Image::new(cam.width, cam.height);
    let mut transmittance = vec![1.0; cam.pixel_count()];
    for py in 0..cam.height {
        for px in 0..cam.width {
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for s in &splats {
                let d = [px as Real - s.u, py as Real - s.v];
                let alpha = (s.opacity * evaluate_density(&s.conic, d)).min(MAX_ALPHA);
                if alpha < ALPHA_CUTOFF {
                    continue;
                }
                for ch in 0..3 {
                    c[ch] += s.color[ch] * alpha * t;
                }
                t *= 1.0 - alpha;
                if t < MIN_TRANSMITTANCE {
                    break;
                }
            }
            let pix = (py * cam.width + px) as usize;
            for ch in 0..3 {
                image.data[3 * pix + ch] = (c[ch] + t * background[ch]).min(1.0);
            }
            transmittance[pix] = t;
        }
    }
    Ok((image, transmittance))
}
