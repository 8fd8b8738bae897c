use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{oracle, render, RenderSettings, SplatScene, StageTimings};
use crate::error::Result;
use crate::gaussians::{sh_coeff_count, Camera, Orbit};
use crate::math::{logit, Quat, Real, Vec3};

/// Owned random Gaussian cloud inside the unit ball plus a camera looking at it.
#[derive(Clone, Debug)]
pub struct RandomScene {
    pub means: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub scales: Vec<Vec3>,
    pub opacity_logits: Vec<Real>,
    pub sh: Vec<Real>,
    pub sh_degree: u32,
    pub camera: Camera,
}

impl RandomScene {
    pub fn scene(&self) -> SplatScene<'_> {
        SplatScene {
            means: &self.means,
            rotations: &self.rotations,
            scales: &self.scales,
            opacity_logits: &self.opacity_logits,
            sh: &self.sh,
            sh_degree: self.sh_degree,
        }
    }
}

/// Deterministic scene for `seed`. Splat size shrinks with `n` so coverage
/// stays comparable across counts.
pub fn random_scene(n: usize, sh_degree: u32, width: u32, height: u32, seed: u64) -> RandomScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = (4.0 * std::f64::consts::PI / n.max(1) as f64).sqrt() as Real;
    let mut means = Vec::with_capacity(n);
    while means.len() < n {
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm() <= 1.0 {
            means.push(p);
        }
    }
    let rotations = (0..n)
        .map(|_| {
            let q: Quat = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let norm = crate::math::quat_norm(&q).max(1e-6);
            q.map(|v| v / norm)
        })
        .collect();
    let scales = (0..n)
        .map(|_| {
            Vec3::from_fn(|_, _| spacing * (rng.random_range(-1.2..0.2) as Real).exp())
        })
        .collect();
    let opacity_logits = (0..n)
        .map(|_| logit(rng.random_range(0.2..0.95)))
        .collect();
    let stride = 3 * sh_coeff_count(sh_degree);
    let sh = (0..n * stride)
        .map(|k| {
            let amp = if k % stride < 3 { 1.0 } else { 0.15 };
            amp * rng.random_range(-1.0..1.0)
        })
        .collect();
    let orbit = Orbit {
        radius: rng.random_range(2.5..4.0),
        elevation_deg: rng.random_range(-40.0..40.0),
        azimuth_deg: rng.random_range(-180.0..180.0),
        fov_deg: rng.random_range(35.0..55.0),
    };
    let camera = Camera::orbit(Vec3::zeros(), &orbit, width, height).expect("valid orbit");
    RandomScene {
        means,
        rotations,
        scales,
        opacity_logits,
        sh,
        sh_degree,
        camera,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkRow {
    pub gaussians: usize,
    pub width: u32,
    pub height: u32,
    pub repetitions: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
    /// Median per-stage times.
    pub stages: StageTimings,
    pub naive_ms: Option<f64>,
    pub speedup_vs_naive: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkReport {
    pub threads: usize,
    pub seed: u64,
    pub sh_degree: u32,
    pub rows: Vec<BenchmarkRow>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

/// Times the tiled renderer at each Gaussian count; optionally times the naive
/// oracle once per count for a speed ratio.
pub fn benchmark(
    sizes: &[usize],
    width: u32,
    height: u32,
    repetitions: usize,
    seed: u64,
    with_naive: bool,
) -> Result<BenchmarkReport> {
    let sh_degree = 3;
    let settings = RenderSettings::default();
    let mut rows = Vec::new();
    for &n in sizes {
        let rs = random_scene(n, sh_degree, width, height, seed);
        let scene = rs.scene();
        // warm-up
        render(&scene, &rs.camera, &settings)?;
        let mut frame_ms = Vec::with_capacity(repetitions);
        let mut stages = Vec::with_capacity(repetitions);
        for _ in 0..repetitions.max(1) {
            let t = Instant::now();
            let out = render(&scene, &rs.camera, &settings)?;
            frame_ms.push(t.elapsed().as_secs_f64() * 1e3);
            stages.push(out.timings);
        }
        let mut sorted = frame_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let median_ms = percentile(&sorted, 0.5);
        let stage_median = |f: fn(&StageTimings) -> f64| {
            let mut v: Vec<f64> = stages.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            percentile(&v, 0.5)
        };
        let naive_ms = if with_naive {
            let t = Instant::now();
            oracle::render_naive(&scene, &rs.camera, settings.background)?;
            Some(t.elapsed().as_secs_f64() * 1e3)
        } else {
            None
        };
        rows.push(BenchmarkRow {
            gaussians: n,
            width,
            height,
            repetitions: frame_ms.len(),
            median_ms,
            p95_ms: percentile(&sorted, 0.95),
            fps: 1e3 / median_ms,
            stages: StageTimings {
                project_ms: stage_median(|s| s.project_ms),
                sort_ms: stage_median(|s| s.sort_ms),
                raster_ms: stage_median(|s| s.raster_ms),
            },
            naive_ms,
            speedup_vs_naive: naive_ms.map(|ms| ms / median_ms),
        });
    }
    Ok(BenchmarkReport {
        threads: rayon::current_num_threads(),
        seed,
        sh_degree,
        rows,
    })
}
