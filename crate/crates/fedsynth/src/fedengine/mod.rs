//! Federated orchestration: public-data pretraining, client selection, local
//! training under FedAvg/FedProx/MOON objectives, weighted aggregation and
//! the round loop with per-domain evaluation.

mod local;
mod pretrain;

pub use local::{classifier_loss, classifier_loss_and_gradient, local_train, LocalObjective};
pub use pretrain::{pretrain, PretrainConfig, PretrainStats};

use crate::allocator::{synthetic_budget, AllocationInput};
use crate::core::{ClientDataset, Dataset, RngStream};
use crate::datasynth::FederatedSplit;
use crate::error::{Error, Result};
use crate::generator::SyntheticSampler;
use crate::metrics::{evaluate, per_domain_report, DomainReport};
use crate::nn::ParamVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    FedAvg,
    FedProx,
    Moon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationWeighting {
    /// Weight by the client's real sample count.
    RealCount,
    /// Weight by the augmented (real + synthetic) count.
    AugmentedCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub total_clients: usize,
    pub active_per_round: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub strategy: Strategy,
    pub prox_mu: f64,
    pub moon_mu: f64,
    pub moon_tau: f64,
    pub synthetic_augmentation: bool,
    pub pretraining: bool,
    pub aggregation_weighting: AggregationWeighting,
    pub local_lr: f64,
    pub class_balanced_local: bool,
    pub eval_interval: usize,
    pub regenerate_each_round: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            total_clients: 85,
            active_per_round: 6,
            rounds: 150,
            local_epochs: 5,
            batch_size: 32,
            strategy: Strategy::FedAvg,
            prox_mu: 0.01,
            moon_mu: 1.0,
            moon_tau: 0.5,
            synthetic_augmentation: false,
            pretraining: true,
            aggregation_weighting: AggregationWeighting::AugmentedCount,
            local_lr: 1e-4,
            class_balanced_local: false,
            eval_interval: 5,
            regenerate_each_round: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active_per_round == 0 || self.active_per_round > self.total_clients {
            return Err(Error::config(format!(
                "active_per_round {} outside 1..={}",
                self.active_per_round, self.total_clients
            )));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be ≥ 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be ≥ 1"));
        }
        if self.prox_mu < 0.0 || self.moon_mu < 0.0 || self.moon_tau <= 0.0 {
            return Err(Error::config("strategy constants out of range"));
        }
        if self.local_lr <= 0.0 {
            return Err(Error::config("local_lr must be > 0"));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval must be ≥ 1"));
        }
        Ok(())
    }
}

/// Per-client synthetic budgeting knobs (aggregate statistics only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorSettings {
    pub epsilon: f64,
    /// Per-domain total synthetic budget S, anti-monotone in domain size.
    pub domain_scales: Vec<f64>,
    /// Permit scale vectors that violate strict anti-monotonicity.
    pub allow_scale_override: bool,
}

impl Default for AllocatorSettings {
    fn default() -> Self {
        AllocatorSettings {
            epsilon: 1.0,
            domain_scales: vec![20.0, 50.0, 80.0],
            allow_scale_override: false,
        }
    }
}

/// Audit trail of one communication round.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    pub update_norms: Vec<f64>,
    pub aggregated_checksum: u64,
    pub wall_time_secs: f64,
}

/// Output of a full federated run.
#[derive(Debug, Clone)]
pub struct FederationRun {
    pub final_params: ParamVector,
    pub rounds: Vec<RoundRecord>,
    /// (round, metrics) at every evaluation point.
    pub history: Vec<(usize, DomainReport)>,
}

impl FederationRun {
    pub fn final_report(&self) -> &DomainReport {
        &self.history.last().expect("federation evaluates at least once").1
    }
}

/// Uniform subset without replacement from the round-derived stream.
pub fn select_clients(
    total_clients: usize,
    active_per_round: usize,
    round: usize,
    fed_rng: &RngStream,
) -> Vec<usize> {
    let mut rng = fed_rng.derive("select").derive(round);
    rng.sample_without_replacement(total_clients, active_per_round)
}

/// Weighted coordinate-wise mean, folded in the given order.
/// The caller fixes the order (ascending client id) for bit determinism.
pub fn aggregate(updates: &[(ParamVector, f64)]) -> Result<ParamVector> {
    let (first, _) = updates.first().ok_or_else(|| Error::protocol("aggregate of nothing"))?;
    let topology = first.topology();
    if updates.iter().any(|(p, _)| p.topology() != topology) {
        return Err(Error::protocol("aggregate over mismatched topologies"));
    }
    let total_weight: f64 = updates.iter().map(|(_, w)| w).sum();
    if total_weight <= 0.0 || total_weight.is_nan() {
        return Err(Error::protocol("aggregate with nonpositive total weight"));
    }
    if updates.len() == 1 {
        // w·θ/w is not bit-exact in floating point; a lone update is its own mean
        return Ok(first.clone());
    }
    let mut acc = vec![0.0; first.len()];
    for (params, w) in updates {
        for (a, v) in acc.iter_mut().zip(params.values()) {
            *a += w * v;
        }
    }
    for a in acc.iter_mut() {
        *a /= total_weight;
    }
    ParamVector::new(acc, topology.clone())
}

/// Everything a federated run needs besides data and config.
pub struct FederationDeps<'a> {
    /// θ0: pretrained parameters or a random initialization.
    pub initial_params: ParamVector,
    /// Frozen sample generator; required when augmentation is on.
    pub generator: Option<&'a dyn SyntheticSampler>,
    pub allocator: AllocatorSettings,
}

fn draw_synthetic(
    client: &ClientDataset,
    generator: &dyn SyntheticSampler,
    settings: &AllocatorSettings,
    rng: &RngStream,
) -> Result<ClientDataset> {
    let scale = *settings.domain_scales.get(client.domain).ok_or_else(|| {
        Error::config(format!("no domain scale for domain {}", client.domain))
    })?;
    let plan = synthetic_budget(&AllocationInput {
        per_class_counts: client.real().class_counts().to_vec(),
        domain_id: client.domain,
        epsilon: settings.epsilon,
        domain_scale: scale,
    })?;
    let mut synthetic = Vec::with_capacity(plan.total_synthetic());
    for (class, &count) in plan.per_class_synthetic.iter().enumerate() {
        let mut srng = rng.derive(class);
        synthetic.extend(generator.sample(class, count, client.domain, &mut srng)?);
    }
    let ds = Dataset::new(
        synthetic,
        client.real().class_count(),
        client.real().domain_count(),
    )?;
    client.with_synthetic(ds)
}

/// Run the federation: initialize every client from θ0, draw synthetic
/// shards once at startup when augmentation is on, then loop
/// select → local train → aggregate → broadcast, evaluating on the
/// centralized test set every `eval_interval` rounds and at the end.
pub fn run_federation(
    split: &FederatedSplit,
    config: &FederationConfig,
    deps: FederationDeps<'_>,
    rng: &RngStream,
) -> Result<FederationRun> {
    config.validate()?;
    if config.total_clients != split.clients.len() {
        return Err(Error::config(format!(
            "config says {} clients, split has {}",
            config.total_clients,
            split.clients.len()
        )));
    }
    let generator = match (config.synthetic_augmentation, deps.generator) {
        (true, None) => {
            return Err(Error::config("synthetic augmentation enabled without a generator"))
        }
        (true, Some(g)) => Some(g),
        (false, _) => None,
    };
    let generator_checksum = generator.map(|g| g.checksum());

    let synth_rng = rng.derive("synthesis");
    let mut clients: Vec<ClientDataset> = Vec::with_capacity(split.clients.len());
    for client in &split.clients {
        match generator {
            Some(g) => clients.push(draw_synthetic(
                client,
                g,
                &deps.allocator,
                &synth_rng.derive(client.client_id),
            )?),
            None => clients.push(client.clone()),
        }
    }

    let fed_rng = rng.derive("federation");
    let round_rng = fed_rng.derive("round");
    let mut global = deps.initial_params;
    let mut previous_locals: Vec<Option<ParamVector>> = vec![None; clients.len()];
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut history = Vec::new();

    for round in 1..=config.rounds {
        let start = Instant::now();
        let selected = select_clients(config.total_clients, config.active_per_round, round, &fed_rng);

        if config.regenerate_each_round {
            if let Some(g) = generator {
                let regen = rng.derive("resynthesis").derive(round);
                for &id in &selected {
                    clients[id] =
                        draw_synthetic(&clients[id], g, &deps.allocator, &regen.derive(id))?;
                }
            }
        }

        let updates: Vec<(usize, ParamVector, f64)> = selected
            .par_iter()
            .map(|&id| {
                let client_rng = round_rng.derive(round).derive("client").derive(id);
                let (params, weight) = local_train(
                    &clients[id],
                    &global,
                    previous_locals[id].as_ref(),
                    config,
                    &client_rng,
                )?;
                Ok((id, params, weight))
            })
            .collect::<Result<Vec<_>>>()?;

        let update_norms: Vec<f64> = updates
            .iter()
            .map(|(_, p, _)| {
                p.values()
                    .iter()
                    .zip(global.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();

        // `selected` is ascending, so the fold order is fixed by client id.
        let weighted: Vec<(ParamVector, f64)> =
            updates.iter().map(|(_, p, w)| (p.clone(), *w)).collect();
        if weighted.iter().any(|(_, w)| *w > 0.0) {
            global = aggregate(&weighted)?;
        }
        for (id, params, _) in updates {
            previous_locals[id] = Some(params);
        }

        rounds.push(RoundRecord {
            round,
            selected,
            update_norms,
            aggregated_checksum: global.checksum(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        });

        if round % config.eval_interval == 0 || round == config.rounds {
            let cms = evaluate(&global, &split.test_set)?;
            history.push((round, per_domain_report(&cms)));
        }
    }

    if let (Some(g), Some(before)) = (generator, generator_checksum) {
        if g.checksum() != before {
            return Err(Error::protocol("generator parameters changed during federation"));
        }
    }

    Ok(FederationRun { final_params: global, rounds, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpTopology;

    fn params_from(values: Vec<f64>) -> ParamVector {
        let topo = MlpTopology {
            input_dim: 1,
            trunk_layers: vec![],
            head_layers: vec![],
            output_dim: 1,
            activation: crate::nn::Activation::Relu,
            dropout_prob: 0.0,
        };
        ParamVector::new(values, topo).unwrap()
    }

    #[test]
    fn aggregate_of_identical_params_is_identity() {
        let p = params_from(vec![1.5, -2.5]);
        let out = aggregate(&[(p.clone(), 2.0), (p.clone(), 5.0)]).unwrap();
        assert_eq!(out.values(), p.values());
    }

    #[test]
    fn weighted_average_hand_case() {
        let p1 = params_from(vec![1.0, 3.0]);
        let p2 = params_from(vec![5.0, 7.0]);
        let out = aggregate(&[(p1, 1.0), (p2, 3.0)]).unwrap();
        assert_eq!(out.values(), &[4.0, 6.0]);
    }

    #[test]
    fn equal_weights_match_plain_mean() {
        let mut rng = crate::core::RngStream::from_seed(3).derive("agg");
        let ps: Vec<ParamVector> = (0..7)
            .map(|_| params_from(vec![rng.normal(), rng.normal()]))
            .collect();
        let weighted: Vec<(ParamVector, f64)> =
            ps.iter().map(|p| (p.clone(), 2.5)).collect();
        let out = aggregate(&weighted).unwrap();
        for i in 0..2 {
            let mean: f64 =
                ps.iter().map(|p| p.values()[i]).sum::<f64>() / ps.len() as f64;
            assert!((out.values()[i] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregation_is_linear_in_parameters() {
        let p1 = params_from(vec![1.0, -2.0]);
        let p2 = params_from(vec![0.5, 4.0]);
        let base = aggregate(&[(p1.clone(), 1.0), (p2.clone(), 2.0)]).unwrap();
        let scaled = aggregate(&[
            (params_from(p1.values().iter().map(|v| 3.0 * v).collect()), 1.0),
            (params_from(p2.values().iter().map(|v| 3.0 * v).collect()), 2.0),
        ])
        .unwrap();
        for (s, b) in scaled.values().iter().zip(base.values()) {
            assert!((s - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_rescaling_leaves_aggregate_unchanged() {
        let p1 = params_from(vec![1.0, -2.0]);
        let p2 = params_from(vec![0.5, 4.0]);
        let a = aggregate(&[(p1.clone(), 1.0), (p2.clone(), 2.0)]).unwrap();
        let b = aggregate(&[(p1, 173.5), (p2, 347.0)]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_topologies_are_protocol_errors() {
        let p1 = params_from(vec![1.0, 2.0]);
        let topo2 = MlpTopology {
            input_dim: 2,
            trunk_layers: vec![],
            head_layers: vec![],
            output_dim: 1,
            activation: crate::nn::Activation::Relu,
            dropout_prob: 0.0,
        };
        let p2 = ParamVector::zeros(topo2);
        assert!(matches!(
            aggregate(&[(p1, 1.0), (p2, 1.0)]),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn selection_is_deterministic_and_exhaustive_at_full_participation() {
        let rng = RngStream::from_seed(4).derive("federation");
        let all = select_clients(9, 9, 1, &rng);
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        let a = select_clients(85, 6, 17, &rng);
        let b = select_clients(85, 6, 17, &rng);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn selection_frequency_is_uniform() {
        let rng = RngStream::from_seed(8).derive("federation");
        let mut hits = vec![0usize; 85];
        let rounds = 1000;
        for r in 0..rounds {
            for id in select_clients(85, 6, r, &rng) {
                hits[id] += 1;
            }
        }
        // Binomial(1000, 6/85): mean ≈ 70.6, σ ≈ 8.1
        let expect = rounds as f64 * 6.0 / 85.0;
        let sd = (rounds as f64 * (6.0 / 85.0) * (1.0 - 6.0 / 85.0)).sqrt();
        for (id, &h) in hits.iter().enumerate() {
            assert!(
                (h as f64 - expect).abs() < 3.0 * sd,
                "client {id} selected {h} times (expect {expect:.1} ± {:.1})",
                3.0 * sd
            );
        }
    }
}
