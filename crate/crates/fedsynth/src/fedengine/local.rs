//! Client-side training: the strategy-specific composite objectives and the
//! per-round local optimization loop.

use super::FederationConfig;
use crate::core::{ClientDataset, RngStream, Sample};
use crate::error::Result;
use crate::nn::{
    self, contrastive_moon, cross_entropy, features_matrix, proximal, Mat, Mode, OptimizerKind,
    OptimizerState, ParamGroup, ParamVector,
};

/// The local objective minimized by a client.
#[derive(Debug, Clone, Copy)]
pub enum LocalObjective<'a> {
    /// Plain cross-entropy.
    CrossEntropy,
    /// Cross-entropy plus (μ/2)·‖θ − θ_global‖².
    Proximal { mu: f64, anchor: &'a ParamVector },
    /// Cross-entropy plus μ·contrastive(z; z_global, z_previous).
    Contrastive {
        mu: f64,
        tau: f64,
        global: &'a ParamVector,
        previous: &'a ParamVector,
    },
}

/// Loss and exact parameter gradient of the composite local objective on one
/// batch. Dropout masks come from `rng`, so replaying the same stream
/// reproduces the same stochastic loss surface.
pub fn classifier_loss_and_gradient(
    params: &ParamVector,
    inputs: &Mat,
    labels: &[usize],
    objective: &LocalObjective,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(f64, Vec<f64>)> {
    let pass = nn::forward(params, inputs, mode, rng)?;
    let (ce, grad_logits) = cross_entropy(pass.logits(), labels);
    match objective {
        LocalObjective::CrossEntropy => {
            let (grad, _) = nn::backward(params, &pass, &grad_logits, None);
            Ok((ce, grad))
        }
        LocalObjective::Proximal { mu, anchor } => {
            let (mut grad, _) = nn::backward(params, &pass, &grad_logits, None);
            let (ploss, pgrad) = proximal(params.values(), anchor.values(), *mu);
            for (g, p) in grad.iter_mut().zip(&pgrad) {
                *g += p;
            }
            Ok((ce + ploss, grad))
        }
        LocalObjective::Contrastive { mu, tau, global, previous } => {
            let mut eval_rng = RngStream::from_seed(0); // eval forwards draw nothing
            let glob_pass = nn::forward(global, inputs, Mode::Eval, &mut eval_rng)?;
            let prev_pass = nn::forward(previous, inputs, Mode::Eval, &mut eval_rng)?;
            let (closs, mut gz) =
                contrastive_moon(pass.features(), glob_pass.features(), prev_pass.features(), *tau);
            for v in gz.data_mut() {
                *v *= mu;
            }
            let (grad, _) = nn::backward(params, &pass, &grad_logits, Some(&gz));
            Ok((ce + mu * closs, grad))
        }
    }
}

/// Loss-only evaluation of the composite objective (used by gradient checks).
pub fn classifier_loss(
    params: &ParamVector,
    inputs: &Mat,
    labels: &[usize],
    objective: &LocalObjective,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<f64> {
    let pass = nn::forward(params, inputs, mode, rng)?;
    let (ce, _) = cross_entropy(pass.logits(), labels);
    match objective {
        LocalObjective::CrossEntropy => Ok(ce),
        LocalObjective::Proximal { mu, anchor } => {
            let (ploss, _) = proximal(params.values(), anchor.values(), *mu);
            Ok(ce + ploss)
        }
        LocalObjective::Contrastive { mu, tau, global, previous } => {
            let mut eval_rng = RngStream::from_seed(0);
            let glob_pass = nn::forward(global, inputs, Mode::Eval, &mut eval_rng)?;
            let prev_pass = nn::forward(previous, inputs, Mode::Eval, &mut eval_rng)?;
            let (closs, _) =
                contrastive_moon(pass.features(), glob_pass.features(), prev_pass.features(), *tau);
            Ok(ce + mu * closs)
        }
    }
}

/// Run the configured number of local epochs on the client's (possibly
/// augmented) shard. Returns the updated parameters and the aggregation
/// weight; an empty shard returns the global parameters with weight 0.
pub fn local_train(
    client: &ClientDataset,
    global: &ParamVector,
    previous_local: Option<&ParamVector>,
    config: &FederationConfig,
    rng: &RngStream,
) -> Result<(ParamVector, f64)> {
    let data: Vec<&Sample> = if config.synthetic_augmentation {
        client.augmented()
    } else {
        client.real().samples().iter().collect()
    };
    let weight = match config.aggregation_weighting {
        super::AggregationWeighting::RealCount => client.real_count() as f64,
        super::AggregationWeighting::AugmentedCount => {
            if config.synthetic_augmentation {
                client.augmented_count() as f64
            } else {
                client.real_count() as f64
            }
        }
    };
    if data.is_empty() {
        return Ok((global.clone(), 0.0));
    }

    let mut params = global.clone();
    let trunk = global.trunk_span();
    let head = global.head_span();
    let mut opt = OptimizerState::new(
        OptimizerKind::AdamW,
        vec![
            ParamGroup { range: trunk, lr: config.local_lr },
            ParamGroup { range: head, lr: config.local_lr },
        ],
        0.0,
        None,
        global.len(),
    );

    // μ = 0 strategies reduce exactly to cross-entropy
    let prev_holder;
    let objective = match config.strategy {
        super::Strategy::FedAvg => LocalObjective::CrossEntropy,
        super::Strategy::FedProx if config.prox_mu == 0.0 => LocalObjective::CrossEntropy,
        super::Strategy::FedProx => LocalObjective::Proximal { mu: config.prox_mu, anchor: global },
        super::Strategy::Moon if config.moon_mu == 0.0 => LocalObjective::CrossEntropy,
        super::Strategy::Moon => {
            prev_holder = previous_local.unwrap_or(global).clone();
            LocalObjective::Contrastive {
                mu: config.moon_mu,
                tau: config.moon_tau,
                global,
                previous: &prev_holder,
            }
        }
    };

    let order_rng = rng.derive("order");
    let dropout_rng = rng.derive("dropout");
    for epoch in 0..config.local_epochs {
        let mut drop_rng = dropout_rng.derive(epoch);
        let batches: Vec<Vec<usize>> = if config.class_balanced_local {
            let local = crate::core::Dataset::new(
                data.iter().map(|s| (*s).clone()).collect(),
                client.real().class_count(),
                client.real().domain_count(),
            )?;
            let sampler = crate::datasynth::ClassBalancedSampler::new(&local, config.batch_size)?;
            let n_batches = data.len().div_ceil(config.batch_size);
            let mut srng = order_rng.derive(epoch);
            (0..n_batches).map(|_| sampler.next_batch(&mut srng)).collect()
        } else {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order_rng.derive(epoch).shuffle(&mut order);
            order.chunks(config.batch_size).map(|c| c.to_vec()).collect()
        };
        for batch in batches {
            let samples: Vec<&Sample> = batch.iter().map(|&i| data[i]).collect();
            let inputs = features_matrix(&samples);
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            let (_, grad) = classifier_loss_and_gradient(
                &params,
                &inputs,
                &labels,
                &objective,
                Mode::Train,
                &mut drop_rng,
            )?;
            opt.step(params.values_mut(), grad);
        }
    }
    Ok((params, weight))
}
