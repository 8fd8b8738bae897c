//! Optimization of an [`Avatar`] against tracked frames.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod metrics;
mod perceptual;

pub use adam::{AdamConfig, AdamMoments};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, CHECKPOINT_MAGIC};
pub use config::{LearningRates, TrainConfig};
pub use loss::{huber, huber_derivative, huber_loss, photometric_loss, LossConfig, PhotometricTerms};
pub use metrics::{image_metrics, psnr_from_mse, ssim, Metrics, PSNR_CAP};
pub use perceptual::{metric_by_name, GradientStatsMetric, PerceptualMetric, DEFAULT_METRIC};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avatar::Avatar;
use crate::dataset::TrainingFrame;
use crate::error::{Error, Result};
use crate::geometry::BlendshapeMesh;
use crate::gaussians::sh_coeff_count;
use crate::image::Image;
use crate::math::Real;
use crate::offsets::compose_backward;
use crate::render::{render_backward, RenderSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed optimizer steps.
    pub step: u64,
    pub epoch: u64,
    /// Steps already taken within the current epoch.
    pub epoch_position: usize,
    pub seed: u64,
    /// One entry per avatar parameter tensor.
    pub moments: Vec<AdamMoments>,
}

impl TrainState {
    pub fn new(avatar: &Avatar, seed: u64) -> Self {
        Self {
            step: 0,
            epoch: 0,
            epoch_position: 0,
            seed,
            moments: avatar.parameters().iter().map(|p| AdamMoments::zeros(p.len())).collect(),
        }
    }
}

/// Loss breakdown of one step, also the training log record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub loss_total: Real,
    pub loss_huber: Real,
    /// Unweighted mouth-masked Huber.
    pub loss_mouth: Real,
    /// Unweighted perceptual distance; zero when its weight is zero.
    pub loss_perc: Real,
    pub ms: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    /// Mean photometric loss (Huber plus weighted mouth term).
    pub loss: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Frame indices for `epoch`, drawn uniformly with replacement.
pub fn epoch_indices(seed: u64, epoch: u64, dataset_len: usize, count: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    (0..count).map(|_| rng.random_range(0..dataset_len)).collect()
}

pub struct Trainer {
    pub config: TrainConfig,
    pub avatar: Avatar,
    pub state: TrainState,
    metric: Box<dyn PerceptualMetric>,
}

impl Trainer {
    pub fn new(config: TrainConfig, mesh: BlendshapeMesh) -> Result<Self> {
        config.validate()?;
        let avatar = Avatar::build(mesh, &config)?;
        Self::from_avatar(config, avatar)
    }

    pub fn from_avatar(config: TrainConfig, avatar: Avatar) -> Result<Self> {
        config.validate()?;
        avatar.validate()?;
        let metric = metric_by_name(&config.loss.perceptual_metric)?;
        let state = TrainState::new(&avatar, config.seed);
        Ok(Self {
            config,
            avatar,
            state,
            metric,
        })
    }

    pub fn set_metric(&mut self, metric: Box<dyn PerceptualMetric>) {
        self.metric = metric;
    }

    pub fn render_settings(&self) -> RenderSettings {
        RenderSettings {
            background: self.config.background,
        }
    }

    /// Loss of `frame` as scheduled at `step`, with its gradient w.r.t. every
    /// parameter tensor. Nothing is modified.
    pub fn loss_and_gradients(&self, frame: &TrainingFrame, step: u64) -> Result<(StepReport, Vec<Vec<Real>>)> {
        let (report, grad_image, posed, rendered) = self.forward_loss(frame, step)?;
        let scene = posed.composed.scene(&self.avatar.field);
        let splat = render_backward(&scene, &frame.camera, &rendered.state, &grad_image)?;
        let cg = compose_backward(&posed.composed, &splat);
        let mut grads = vec![
            cg.rotations.as_flattened().to_vec(),
            cg.log_scales.as_flattened().to_vec(),
            splat.opacity_logits,
            splat.sh,
        ];
        grads.extend(self.avatar.offsets.backward(&posed.pass, &cg.residuals));
        Ok((report, grads))
    }

    /// Scalar objective only.
    pub fn loss(&self, frame: &TrainingFrame, step: u64) -> Result<Real> {
        Ok(self.forward_loss(frame, step)?.0.loss_total)
    }

    fn forward_loss(
        &self,
        frame: &TrainingFrame,
        step: u64,
    ) -> Result<(StepReport, Image, crate::avatar::Posed, crate::render::Rendered)> {
        let (rendered, posed) = self.avatar.render(&frame.psi, &frame.camera, &self.render_settings())?;
        let pred = &rendered.frame.image;
        let cfg = &self.config.loss;
        let (terms, mut grad) = photometric_loss(&frame.image, pred, frame.mouth_mask.as_ref(), cfg)?;
        let mut total = terms.huber + cfg.mouth_weight * terms.mouth;
        let mut perc = 0.0;
        let w = cfg.perceptual_weight_at(step);
        if w != 0.0 {
            let (d, g) = self.metric.evaluate(pred, &frame.image)?;
            perc = d;
            total += w * d;
            for (a, b) in grad.data.iter_mut().zip(&g.data) {
                *a += w * b;
            }
        }
        let report = StepReport {
            step,
            loss_total: total,
            loss_huber: terms.huber,
            loss_mouth: terms.mouth,
            loss_perc: perc,
            ms: 0.0,
        };
        Ok((report, grad, posed, rendered))
    }

    /// One optimizer step on `frame`. On a non-finite loss nothing changes.
    pub fn train_step(&mut self, frame: &TrainingFrame) -> Result<StepReport> {
        let start = Instant::now();
        let step = self.state.step;
        let (mut report, grads) = self.loss_and_gradients(frame, step)?;
        if !report.loss_total.is_finite() {
            log::error!("non-finite loss at step {step} on frame {}", frame.frame_id);
            return Err(Error::NonFiniteLoss {
                step,
                frame_id: frame.frame_id.clone(),
            });
        }
        let t = step + 1;
        let lr = self.config.learning_rates;
        let adam = self.config.adam;
        let sh_stride = 3 * sh_coeff_count(self.avatar.field.sh_degree);
        let mut params = self.avatar.parameters_mut();
        for (k, ((p, g), m)) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.state.moments.iter_mut())
            .enumerate()
        {
            match k {
                0 => m.update(p, g, t, |_| lr.rotation, adam.eps_gaussian, &adam),
                1 => m.update(p, g, t, |_| lr.scale, adam.eps_gaussian, &adam),
                2 => m.update(p, g, t, |_| lr.opacity, adam.eps_gaussian, &adam),
                3 => m.update(
                    p,
                    g,
                    t,
                    |i| if i % sh_stride < 3 { lr.sh_dc } else { lr.sh_rest },
                    adam.eps_gaussian,
                    &adam,
                ),
                _ => m.update(p, g, t, |_| lr.network, adam.eps_network, &adam),
            }
        }
        self.avatar.field.renormalize_rotations();
        self.state.step = t;
        report.step = t;
        report.ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(report)
    }

    /// Runs `steps` steps, continuing the current epoch's sampled sequence.
    pub fn train_steps(
        &mut self,
        frames: &[TrainingFrame],
        steps: u64,
        mut on_step: impl FnMut(&StepReport),
    ) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let per_epoch = self.config.frames_per_epoch;
        let mut indices = epoch_indices(self.state.seed, self.state.epoch, frames.len(), per_epoch);
        for _ in 0..steps {
            let frame = &frames[indices[self.state.epoch_position]];
            let report = self.train_step(frame)?;
            on_step(&report);
            self.state.epoch_position += 1;
            if self.state.epoch_position == per_epoch {
                self.state.epoch += 1;
                self.state.epoch_position = 0;
                indices = epoch_indices(self.state.seed, self.state.epoch, frames.len(), per_epoch);
            }
        }
        Ok(())
    }

    /// Finishes the current epoch.
    pub fn train_epoch(&mut self, frames: &[TrainingFrame], on_step: impl FnMut(&StepReport)) -> Result<()> {
        let remaining = self.config.frames_per_epoch - self.state.epoch_position;
        self.train_steps(frames, remaining as u64, on_step)
    }

    pub fn evaluate(&self, frames: &[TrainingFrame]) -> Result<EvalReport> {
        let settings = self.render_settings();
        let mut per = Vec::with_capacity(frames.len());
        let mut loss = 0.0;
        for f in frames {
            let (out, _) = self.avatar.render(&f.psi, &f.camera, &settings)?;
            let (terms, _) = photometric_loss(&f.image, &out.frame.image, f.mouth_mask.as_ref(), &self.config.loss)?;
            loss += (terms.huber + self.config.loss.mouth_weight * terms.mouth) as f64;
            per.push(image_metrics(&out.frame.image, &f.image)?);
        }
        Ok(EvalReport {
            frames: frames.len(),
            loss: loss / frames.len().max(1) as f64,
            metrics: Metrics::mean(&per),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.avatar, &self.state)
    }

    /// Restores parameters and optimizer state; the checkpoint must come from the same config.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let hash = self.config.hash();
        if ckpt.manifest.config_hash != hash {
            return Err(Error::ConfigHashMismatch {
                expected: hash,
                actual: ckpt.manifest.config_hash.clone(),
            });
        }
        ckpt.apply(&mut self.avatar)?;
        self.state = ckpt.state.clone();
        Ok(())
    }
}
