//! Server-side generator training on the public pool: forward-diffuse a
//! minibatch to random timesteps, predict the injected noise under randomly
//! dropped class conditioning, and minimize MSE+L1 with clipped Adam-style
//! updates. Features are standardized per coordinate for training and
//! de-standardized at sampling time.

use super::denoiser::{Conditioning, DenoiserModel};
use super::schedule::cosine_schedule;
use super::GeneratorModel;
use crate::core::{Dataset, RngStream};
use crate::error::{Error, Result};
use crate::nn::{Mat, OptimizerKind, OptimizerState};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub diffusion_steps: usize,
    pub hidden_layers: Vec<usize>,
    pub time_embed_dim: usize,
    pub class_embed_dim: usize,
    /// Probability of replacing the class id by the null class per example.
    pub cond_drop_prob: f64,
    pub guidance_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// Exponential moving average of the weights; the frozen model keeps the
    /// averaged parameters. 0 disables averaging.
    pub ema_decay: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            diffusion_steps: 512,
            hidden_layers: vec![64, 64],
            time_embed_dim: 16,
            class_embed_dim: 8,
            cond_drop_prob: 0.1,
            guidance_scale: 5.0,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            grad_clip: 1.0,
            ema_decay: 0.999,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.diffusion_steps < 2 {
            return Err(Error::config("generator: diffusion_steps must be ≥ 2"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("generator: batch_size must be ≥ 1"));
        }
        if !(0.0..1.0).contains(&self.cond_drop_prob) {
            return Err(Error::config("generator: cond_drop_prob outside [0,1)"));
        }
        if self.guidance_scale < 0.0 {
            return Err(Error::config("generator: negative guidance scale"));
        }
        if self.learning_rate <= 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::config("generator: learning rate and clip must be > 0"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::config("generator: ema_decay outside [0,1)"));
        }
        Ok(())
    }
}

/// Counters and probe losses from one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorTrainStats {
    pub examples_seen: usize,
    pub cond_drops: usize,
    pub first_batch_loss: f64,
    pub final_epoch_mean_loss: f64,
}

/// Train a frozen class-conditional diffusion generator on the public pool.
pub fn train_generator(
    public: &Dataset,
    config: &GeneratorConfig,
    rng: &RngStream,
) -> Result<(GeneratorModel, GeneratorTrainStats)> {
    config.validate()?;
    if public.is_empty() {
        return Err(Error::config("generator: empty public dataset"));
    }
    if let Some(missing) = public.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::config(format!(
            "generator: class {missing} missing from public data"
        )));
    }

    let d = public.feature_dim();
    let n = public.len();
    let classes = public.class_count();

    // per-coordinate standardization of the training features
    let mut mean = vec![0.0; d];
    for s in public.samples() {
        for (m, v) in mean.iter_mut().zip(&s.features) {
            *m += v / n as f64;
        }
    }
    let mut std = vec![0.0; d];
    for s in public.samples() {
        for (sd, (v, m)) in std.iter_mut().zip(s.features.iter().zip(&mean)) {
            *sd += (v - m) * (v - m) / n as f64;
        }
    }
    for sd in std.iter_mut() {
        *sd = sd.sqrt().max(1e-8);
    }
    let normalized: Vec<Vec<f64>> = public
        .samples()
        .iter()
        .map(|s| {
            s.features
                .iter()
                .enumerate()
                .map(|(i, v)| (v - mean[i]) / std[i])
                .collect()
        })
        .collect();
    let labels: Vec<usize> = public.samples().iter().map(|s| s.label).collect();

    let schedule = cosine_schedule(config.diffusion_steps)?;
    let mut denoiser = DenoiserModel::init(
        d,
        classes,
        &config.hidden_layers,
        config.time_embed_dim,
        config.class_embed_dim,
        config.diffusion_steps,
        &mut rng.derive("denoiser-init"),
    )?;
    let mut opt = OptimizerState::single(
        OptimizerKind::AdamW,
        config.learning_rate,
        0.0,
        Some(config.grad_clip),
        denoiser.param_len(),
    );

    let mut stats = GeneratorTrainStats {
        examples_seen: 0,
        cond_drops: 0,
        first_batch_loss: f64::NAN,
        final_epoch_mean_loss: f64::NAN,
    };
    let mut ema = denoiser.params().to_vec();
    let mut steps_done = 0u64;

    let order_rng = rng.derive("epoch-order");
    let draw_rng = rng.derive("epoch-draws");
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order_rng.derive(epoch).shuffle(&mut order);
        let mut ep_rng = draw_rng.derive(epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let mut x_rows = Vec::with_capacity(chunk.len());
            let mut ts = Vec::with_capacity(chunk.len());
            let mut conds = Vec::with_capacity(chunk.len());
            let mut eps_rows = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let t = 1 + ep_rng.uniform_range(config.diffusion_steps);
                let eps = ep_rng.normal_vec(d);
                let cond = if ep_rng.uniform() < config.cond_drop_prob {
                    stats.cond_drops += 1;
                    Conditioning::Null
                } else {
                    Conditioning::Class(labels[idx])
                };
                x_rows.push(schedule.diffuse(&normalized[idx], &eps, t));
                ts.push(t);
                conds.push(cond);
                eps_rows.push(eps);
                stats.examples_seen += 1;
            }
            let x_t = Mat::from_rows(&x_rows);
            let target = Mat::from_rows(&eps_rows);
            let (loss, grad) = denoiser.loss_and_gradient(&x_t, &ts, &conds, &target);
            if stats.first_batch_loss.is_nan() {
                stats.first_batch_loss = loss;
            }
            opt.step(denoiser.params_mut(), grad);
            steps_done += 1;
            if config.ema_decay > 0.0 {
                // warmed-up decay keeps the average tracking early training
                let decay = config
                    .ema_decay
                    .min((1.0 + steps_done as f64) / (10.0 + steps_done as f64));
                for (e, p) in ema.iter_mut().zip(denoiser.params()) {
                    *e = decay * *e + (1.0 - decay) * p;
                }
            }
            epoch_loss += loss;
            batches += 1;
        }
        if batches > 0 {
            stats.final_epoch_mean_loss = epoch_loss / batches as f64;
        }
    }
    if config.ema_decay > 0.0 {
        denoiser.params_mut().copy_from_slice(&ema);
    }

    let model = GeneratorModel::new(
        denoiser,
        schedule,
        config.guidance_scale,
        true,
        mean,
        std,
    );
    Ok((model, stats))
}
