//! Server-side pretraining on the public pool: class-balanced batches,
//! per-group learning rates, plateau scheduling and early stopping with
//! best-checkpoint restore.

use crate::core::{Dataset, RngStream, Sample};
use crate::datasynth::ClassBalancedSampler;
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy, features_matrix, forward, MlpTopology, Mode, OptimizerKind, OptimizerState,
    ParamGroup, ParamVector, PlateauSchedule,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub head_lr: f64,
    pub trunk_lr: f64,
    pub weight_decay: f64,
    /// Held-out fraction of the public pool used for scheduling/stopping.
    pub val_fraction: f64,
    pub early_stop_patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 30,
            batch_size: 32,
            head_lr: 1e-3,
            trunk_lr: 1e-4,
            weight_decay: 1e-4,
            val_fraction: 0.1,
            early_stop_patience: 5,
            plateau_factor: 0.5,
            plateau_patience: 3,
            plateau_min_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainStats {
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub val_accuracy: f64,
}

fn mean_loss(params: &ParamVector, samples: &[&Sample]) -> Result<f64> {
    let inputs = features_matrix(samples);
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mut rng = RngStream::from_seed(0);
    let pass = forward(params, &inputs, Mode::Eval, &mut rng)?;
    Ok(cross_entropy(pass.logits(), &labels).0)
}

fn accuracy_on(params: &ParamVector, samples: &[&Sample]) -> Result<f64> {
    let inputs = features_matrix(samples);
    let mut rng = RngStream::from_seed(0);
    let pass = forward(params, &inputs, Mode::Eval, &mut rng)?;
    let mut hits = 0usize;
    for (r, s) in samples.iter().enumerate() {
        let row = pass.logits().row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Train the classifier on public data and return the best-validation
/// parameters θ0.
pub fn pretrain(
    public: &Dataset,
    topology: &MlpTopology,
    config: &PretrainConfig,
    rng: &RngStream,
) -> Result<(ParamVector, PretrainStats)> {
    if public.is_empty() {
        return Err(Error::config("pretrain: empty public dataset"));
    }
    if let Some(missing) = public.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::config(format!(
            "pretrain: class {missing} missing from public data"
        )));
    }
    if !(0.0..1.0).contains(&config.val_fraction) {
        return Err(Error::config("pretrain: val_fraction outside [0,1)"));
    }

    // held-out validation split
    let mut order: Vec<usize> = (0..public.len()).collect();
    rng.derive("val-split").shuffle(&mut order);
    let n_val = ((public.len() as f64 * config.val_fraction).round() as usize)
        .clamp(1, public.len() - 1);
    let val: Vec<&Sample> = order[..n_val].iter().map(|&i| &public.samples()[i]).collect();
    let train: Vec<Sample> = order[n_val..]
        .iter()
        .map(|&i| public.samples()[i].clone())
        .collect();
    let train_ds = Dataset::new(train, public.class_count(), public.domain_count())?;

    let mut params = ParamVector::random_init(topology.clone(), &mut rng.derive("init"));
    let trunk = params.trunk_span();
    let head = params.head_span();
    let mut opt = OptimizerState::new(
        OptimizerKind::AdamW,
        vec![
            ParamGroup { range: trunk, lr: config.trunk_lr },
            ParamGroup { range: head, lr: config.head_lr },
        ],
        config.weight_decay,
        None,
        params.len(),
    );
    let mut schedule = PlateauSchedule::new(
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_min_delta,
    );

    let sampler = ClassBalancedSampler::new(&train_ds, config.batch_size)?;
    let batches_per_epoch = train_ds.len().div_ceil(config.batch_size);
    let epoch_rng = rng.derive("epochs");

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut bad_epochs = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 0..config.epochs {
        epochs_run = epoch + 1;
        let mut erng = epoch_rng.derive(epoch);
        for _ in 0..batches_per_epoch {
            let batch = sampler.next_batch(&mut erng);
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train_ds.samples()[i]).collect();
            let inputs = features_matrix(&samples);
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            let pass = forward(&params, &inputs, Mode::Train, &mut erng)?;
            let (_, grad_logits) = cross_entropy(pass.logits(), &labels);
            let (grad, _) = crate::nn::backward(&params, &pass, &grad_logits, None);
            opt.step(params.values_mut(), grad);
        }
        let val_loss = mean_loss(&params, &val)?;
        if schedule.observe(val_loss) {
            opt.scale_learning_rates(schedule.factor);
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.early_stop_patience {
                break;
            }
        }
    }

    let val_accuracy = accuracy_on(&best_params, &val)?;
    Ok((best_params, PretrainStats { epochs_run, best_val_loss: best_val, val_accuracy }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn separable_public(n_per_class: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::from_seed(seed).derive("pub");
        let mut samples = Vec::new();
        for c in 0..2usize {
            let center = if c == 0 { -4.0 } else { 4.0 };
            for _ in 0..n_per_class {
                samples.push(Sample::new(
                    vec![center + 0.5 * rng.normal(), 0.5 * rng.normal()],
                    c,
                    0,
                ));
            }
        }
        Dataset::new(samples, 2, 1).unwrap()
    }

    fn small_topology() -> MlpTopology {
        MlpTopology {
            input_dim: 2,
            trunk_layers: vec![8],
            head_layers: vec![8],
            output_dim: 2,
            activation: Activation::Relu,
            dropout_prob: 0.3,
        }
    }

    #[test]
    fn separable_data_reaches_high_validation_accuracy() {
        let public = separable_public(150, 5);
        let config = PretrainConfig { epochs: 20, ..PretrainConfig::default() };
        let rng = RngStream::from_seed(11).derive("pre");
        let (_, stats) = pretrain(&public, &small_topology(), &config, &rng).unwrap();
        assert!(stats.val_accuracy >= 0.99, "val accuracy {}", stats.val_accuracy);
    }

    #[test]
    fn pretrain_is_deterministic() {
        let public = separable_public(60, 7);
        let config = PretrainConfig { epochs: 5, ..PretrainConfig::default() };
        let rng = RngStream::from_seed(13).derive("pre");
        let (a, _) = pretrain(&public, &small_topology(), &config, &rng).unwrap();
        let (b, _) = pretrain(&public, &small_topology(), &config, &rng).unwrap();
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn missing_class_is_rejected() {
        let mut samples = Vec::new();
        for i in 0..20 {
            samples.push(Sample::new(vec![i as f64, 0.0], 0, 0));
        }
        let public = Dataset::new(samples, 2, 1).unwrap();
        let rng = RngStream::from_seed(1);
        assert!(pretrain(&public, &small_topology(), &PretrainConfig::default(), &rng).is_err());
    }

    #[test]
    fn early_stopping_halts_before_the_epoch_cap() {
        // unlearnable labels: training overfits, validation loss stalls,
        // stopping kicks in well before the cap
        let mut rng = RngStream::from_seed(29).derive("noise");
        let samples: Vec<Sample> = (0..80)
            .map(|_| {
                Sample::new(vec![rng.normal(), rng.normal()], rng.uniform_range(2), 0)
            })
            .collect();
        let public = Dataset::new(samples, 2, 1).unwrap();
        let config = PretrainConfig {
            epochs: 200,
            early_stop_patience: 3,
            ..PretrainConfig::default()
        };
        let rng = RngStream::from_seed(17).derive("pre");
        let (_, stats) = pretrain(&public, &small_topology(), &config, &rng).unwrap();
        assert!(stats.epochs_run < 200, "ran all {} epochs", stats.epochs_run);
    }
}
