//! Class-conditional generative models producing labeled synthetic feature
//! vectors: a vector-space denoising diffusion model with classifier-free
//! guidance, trained server-side on public data and frozen during federation,
//! plus a closed-form Gaussian-mixture baseline.

mod checkpoint;
mod denoiser;
mod gmm;
mod schedule;
mod train;

pub use checkpoint::{read_generator, write_generator};
pub use denoiser::{Conditioning, DenoiserModel};
pub use gmm::{fit_gmm_baseline, GmmSampler};
pub use schedule::{cosine_schedule, NoiseSchedule};
pub use train::{train_generator, GeneratorConfig, GeneratorTrainStats};

use crate::core::{RngStream, Sample};
use crate::error::{Error, Result};
use crate::nn::Mat;

/// Anything that can draw labeled synthetic samples for a client.
pub trait SyntheticSampler: Sync {
    /// Draw `count` samples of `class_id`, tagged with the caller's domain.
    fn sample(
        &self,
        class_id: usize,
        count: usize,
        domain: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Sample>>;

    /// Digest of every learned parameter; used to assert frozenness.
    fn checksum(&self) -> u64;

    fn class_count(&self) -> usize;
}

/// Frozen conditional denoiser plus its noise schedule and the feature
/// standardization used during training.
#[derive(Debug, Clone)]
pub struct GeneratorModel {
    denoiser: DenoiserModel,
    schedule: NoiseSchedule,
    guidance_scale: f64,
    frozen: bool,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
}

impl GeneratorModel {
    /// Assemble a generator from parts (the usual route is
    /// [`train_generator`]). `norm_mean`/`norm_std` de-standardize samples.
    pub fn new(
        denoiser: DenoiserModel,
        schedule: NoiseSchedule,
        guidance_scale: f64,
        frozen: bool,
        norm_mean: Vec<f64>,
        norm_std: Vec<f64>,
    ) -> Self {
        GeneratorModel { denoiser, schedule, guidance_scale, frozen, norm_mean, norm_std }
    }

    pub fn denoiser(&self) -> &DenoiserModel {
        &self.denoiser
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn guidance_scale(&self) -> f64 {
        self.guidance_scale
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn norm_mean(&self) -> &[f64] {
        &self.norm_mean
    }

    pub fn norm_std(&self) -> &[f64] {
        &self.norm_std
    }

    /// Guided noise prediction: ε̂ = ε_uncond + g·(ε_cond − ε_uncond).
    /// g = 0 and g = 1 reproduce the unconditional/conditional branches
    /// exactly.
    pub fn cfg_predict(&self, x_t: &Mat, t: usize, class_id: usize) -> Mat {
        let g = self.guidance_scale;
        if g == 0.0 {
            return self.denoiser.predict(x_t, t, Conditioning::Null);
        }
        if g == 1.0 {
            return self.denoiser.predict(x_t, t, Conditioning::Class(class_id));
        }
        let cond = self.denoiser.predict(x_t, t, Conditioning::Class(class_id));
        let uncond = self.denoiser.predict(x_t, t, Conditioning::Null);
        let mut out = uncond.clone();
        for (o, (c, u)) in out
            .data_mut()
            .iter_mut()
            .zip(cond.data().iter().zip(uncond.data()))
        {
            *o = u + g * (c - u);
        }
        out
    }

    /// Ancestral reverse diffusion from a standard-normal latent, with the
    /// reverse variance σ_t² = β_t. The predicted x0 is clamped to a generous
    /// range in standardized space, which keeps strongly guided trajectories
    /// from diverging. Deterministic given the stream.
    fn sample_batch(&self, class_id: usize, count: usize, rng: &mut RngStream) -> Mat {
        const X0_CLAMP: f64 = 6.0;
        let d = self.denoiser.data_dim();
        let steps = self.schedule.steps();
        let mut x = Mat::zeros(count, d);
        for v in x.data_mut() {
            *v = rng.normal();
        }
        for t in (1..=steps).rev() {
            let eps_hat = self.cfg_predict(&x, t, class_id);
            let alpha = self.schedule.alpha(t);
            let beta = self.schedule.beta(t);
            let ab_t = self.schedule.alpha_bar(t);
            let ab_prev = self.schedule.alpha_bar(t - 1);
            // mean = c0·clamp(x̂0) + ct·x_t
            let c0 = ab_prev.sqrt() * beta / (1.0 - ab_t);
            let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
            let to_x0 = 1.0 / ab_t.sqrt();
            let noise_coef = (1.0 - ab_t).sqrt();
            let sigma = beta.sqrt();
            for r in 0..count {
                let er = eps_hat.row(r).to_vec();
                let row = x.row_mut(r);
                for (i, v) in row.iter_mut().enumerate() {
                    let x0 = ((*v - noise_coef * er[i]) * to_x0).clamp(-X0_CLAMP, X0_CLAMP);
                    let mean = c0 * x0 + ct * *v;
                    *v = if t > 1 { mean + sigma * rng.normal() } else { mean };
                }
            }
        }
        x
    }
}

impl SyntheticSampler for GeneratorModel {
    fn sample(
        &self,
        class_id: usize,
        count: usize,
        domain: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Sample>> {
        if !self.frozen {
            return Err(Error::protocol("sampling from an unfrozen generator"));
        }
        if class_id >= self.denoiser.class_count() {
            return Err(Error::config(format!("class {class_id} out of range")));
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let raw = self.sample_batch(class_id, count, rng);
        Ok((0..count)
            .map(|r| {
                let features: Vec<f64> = raw
                    .row(r)
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * self.norm_std[i] + self.norm_mean[i])
                    .collect();
                Sample::new(features, class_id, domain)
            })
            .collect())
    }

    fn checksum(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &v in self.denoiser.params() {
            eat(v);
        }
        for &v in self.schedule.alpha_bar_table() {
            eat(v);
        }
        eat(self.guidance_scale);
        for &v in self.norm_mean.iter().chain(&self.norm_std) {
            eat(v);
        }
        h
    }

    fn class_count(&self) -> usize {
        self.denoiser.class_count()
    }
}
