//! Experiment configuration: one JSON document with nested sections, preset
//! bundles merged over defaults, and strict schema validation (unknown keys
//! are rejected with their JSON path).

use anyhow::{anyhow, bail, Context, Result};
use fedsynth::datasynth::BenchmarkSpec;
use fedsynth::fedengine::{
    AllocatorSettings, FederationConfig, PretrainConfig, Strategy,
};
use fedsynth::generator::GeneratorConfig;
use fedsynth::nn::{Activation, MlpTopology};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::PathBuf;

/// Classifier shape knobs (the benchmark's feature dim and class count fix
/// the input/output sizes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub trunk_layers: Vec<usize>,
    pub head_layers: Vec<usize>,
    pub dropout_prob: f64,
    pub activation: Activation,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            trunk_layers: vec![32, 32],
            head_layers: vec![16],
            dropout_prob: 0.3,
            activation: Activation::Relu,
        }
    }
}

impl ClassifierConfig {
    pub fn topology(&self, input_dim: usize, classes: usize) -> MlpTopology {
        MlpTopology {
            input_dim,
            trunk_layers: self.trunk_layers.clone(),
            head_layers: self.head_layers.clone(),
            output_dim: classes,
            activation: self.activation,
            dropout_prob: self.dropout_prob,
        }
    }
}

/// One cell of the experiment grid: a labeled strategy variant with optional
/// per-arm overrides of the federation shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentArm {
    pub label: String,
    pub strategy: Strategy,
    pub synthetic_augmentation: bool,
    pub pretraining: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_clients: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_per_round: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_scale_override: Option<bool>,
}

impl ExperimentArm {
    pub fn new(label: &str, strategy: Strategy, augmentation: bool, pretraining: bool) -> Self {
        ExperimentArm {
            label: label.to_string(),
            strategy,
            synthetic_augmentation: augmentation,
            pretraining,
            total_clients: None,
            active_per_round: None,
            rounds: None,
            domain_scales: None,
            allow_scale_override: None,
        }
    }

    /// Concrete federation/allocator settings for this arm.
    pub fn resolve(
        &self,
        base_fed: &FederationConfig,
        base_alloc: &AllocatorSettings,
    ) -> (FederationConfig, AllocatorSettings) {
        let mut fed = base_fed.clone();
        fed.strategy = self.strategy;
        fed.synthetic_augmentation = self.synthetic_augmentation;
        fed.pretraining = self.pretraining;
        if let Some(k) = self.total_clients {
            fed.total_clients = k;
        }
        if let Some(a) = self.active_per_round {
            fed.active_per_round = a;
        }
        if let Some(r) = self.rounds {
            fed.rounds = r;
        }
        let mut alloc = base_alloc.clone();
        if let Some(scales) = &self.domain_scales {
            alloc.domain_scales = scales.clone();
        }
        if let Some(o) = self.allow_scale_override {
            alloc.allow_scale_override = o;
        }
        (fed, alloc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    pub classifier: ClassifierConfig,
    pub federation: FederationConfig,
    pub generator: GeneratorConfig,
    pub allocator: AllocatorSettings,
    pub pretrain: PretrainConfig,
    pub dirichlet_alpha: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub arms: Vec<ExperimentArm>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            benchmark: BenchmarkSpec::default_desk(),
            classifier: ClassifierConfig::default(),
            federation: FederationConfig::default(),
            generator: GeneratorConfig::default(),
            allocator: AllocatorSettings::default(),
            pretrain: PretrainConfig::default(),
            dirichlet_alpha: 0.5,
            seeds: vec![1, 2, 3],
            output_dir: PathBuf::from("fedsynth-out"),
            arms: vec![
                ExperimentArm::new("fedavg", Strategy::FedAvg, false, true),
                ExperimentArm::new("fedssg", Strategy::FedAvg, true, true),
            ],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        self.federation.validate()?;
        self.generator.validate()?;
        if self.seeds.is_empty() {
            bail!("config: seeds must be nonempty");
        }
        if self.arms.is_empty() {
            bail!("config: arms must be nonempty");
        }
        if self.dirichlet_alpha <= 0.0 {
            bail!("config: dirichlet_alpha must be > 0");
        }
        let mut labels: Vec<&str> = self.arms.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.arms.len() {
            bail!("config: arm labels must be unique");
        }
        Ok(())
    }
}

/// Recursive JSON merge: objects merge key-wise, everything else (including
/// arrays) is replaced by the overlay.
pub fn merge_value(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Build the effective config: defaults ← preset ← user file.
pub fn load_config(
    preset: Option<&str>,
    config_path: Option<&std::path::Path>,
) -> Result<ExperimentConfig> {
    let base = match preset {
        Some(name) => preset_config(name)?,
        None => ExperimentConfig::default(),
    };
    let mut value = serde_json::to_value(&base).context("serializing default config")?;
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let overlay: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        merge_value(&mut value, overlay);
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| anyhow!("config field `{}`: {}", e.path(), e.inner()))?;
    config.validate()?;
    Ok(config)
}

/// Named experiment bundles. Each is a complete config; a user file can still
/// override any field.
pub fn preset_config(name: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    match name {
        // Full strategy comparison: every local strategy with and without
        // public-data pretraining (8 runs per seed).
        "strategy-grid" => {
            config.arms = vec![
                ExperimentArm::new("fedavg-scratch", Strategy::FedAvg, false, false),
                ExperimentArm::new("moon-scratch", Strategy::Moon, false, false),
                ExperimentArm::new("fedprox-scratch", Strategy::FedProx, false, false),
                ExperimentArm::new("fedssg-scratch", Strategy::FedAvg, true, false),
                ExperimentArm::new("fedavg", Strategy::FedAvg, false, true),
                ExperimentArm::new("moon", Strategy::Moon, false, true),
                ExperimentArm::new("fedprox", Strategy::FedProx, false, true),
                ExperimentArm::new("fedssg", Strategy::FedAvg, true, true),
            ];
        }
        // Synthetic-budget ablation over the per-domain scale vectors.
        "scale-grid" => {
            let mut flat = ExperimentArm::new("fedssg-flat50", Strategy::FedAvg, true, true);
            flat.domain_scales = Some(vec![50.0, 50.0, 50.0]);
            flat.allow_scale_override = Some(true);
            let mut half = ExperimentArm::new("fedssg-half", Strategy::FedAvg, true, true);
            half.domain_scales = Some(vec![10.0, 25.0, 40.0]);
            let mut base = ExperimentArm::new("fedssg-default", Strategy::FedAvg, true, true);
            base.domain_scales = Some(vec![20.0, 50.0, 80.0]);
            let mut double = ExperimentArm::new("fedssg-double", Strategy::FedAvg, true, true);
            double.domain_scales = Some(vec![40.0, 100.0, 160.0]);
            config.arms = vec![flat, half, base, double];
        }
        // Client-population and participation ablations.
        "client-grid" => {
            let mut arms = Vec::new();
            for k in [70usize, 85, 100] {
                for (label, aug) in [("fedavg", false), ("fedssg", true)] {
                    let mut arm = ExperimentArm::new(
                        &format!("{label}-k{k}"),
                        Strategy::FedAvg,
                        aug,
                        true,
                    );
                    arm.total_clients = Some(k);
                    arms.push(arm);
                }
            }
            for active in [4usize, 8] {
                for (label, aug) in [("fedavg", false), ("fedssg", true)] {
                    let mut arm = ExperimentArm::new(
                        &format!("{label}-a{active}"),
                        Strategy::FedAvg,
                        aug,
                        true,
                    );
                    arm.active_per_round = Some(active);
                    arms.push(arm);
                }
            }
            config.arms = arms;
        }
        // Double-length training to check convergence.
        "long-run" => {
            let mut fedavg = ExperimentArm::new("fedavg-long", Strategy::FedAvg, false, true);
            fedavg.rounds = Some(300);
            let mut fedssg = ExperimentArm::new("fedssg-long", Strategy::FedAvg, true, true);
            fedssg.rounds = Some(300);
            config.arms = vec![fedavg, fedssg];
        }
        // Desk-scale quick comparison: 20 clients, 40 rounds, 5 seeds.
        "desk" => {
            config.federation.total_clients = 20;
            config.federation.rounds = 40;
            config.seeds = vec![1, 2, 3, 4, 5];
        }
        other => bail!(
            "unknown preset `{other}` (available: strategy-grid, scale-grid, client-grid, long-run, desk)"
        ),
    }
    Ok(config)
}
