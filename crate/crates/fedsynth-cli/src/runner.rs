//! Experiment execution: the arms × seeds grid, the per-run pipeline
//! (benchmark → split → pretrain → generator → federation → evaluation),
//! generator checkpoint caching and crash-safe output files.

use crate::config::{ExperimentArm, ExperimentConfig};
use anyhow::{bail, Context, Result};
use fedsynth::allocator::{synthetic_budget, validate_domain_scales, AllocationInput};
use fedsynth::core::{export_dataset, RngStream};
use fedsynth::datasynth::{generate_benchmark, make_federated_split};
use fedsynth::fedengine::{pretrain, run_federation, FederationDeps};
use fedsynth::generator::{
    read_generator, train_generator, write_generator, GeneratorModel, SyntheticSampler,
};
use fedsynth::metrics::{csv_header, csv_row, DomainReport};
use fedsynth::nn::ParamVector;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Outcome of one (arm, seed) run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: String,
    pub seed: u64,
    pub history: Vec<(usize, DomainReport)>,
    pub csv_path: PathBuf,
    pub wall_time_secs: f64,
}

impl RunSummary {
    pub fn final_report(&self) -> &DomainReport {
        &self.history.last().expect("run evaluates at least once").1
    }
}

/// Write atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn fnv64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Run the whole grid. Runs execute in parallel; each writes its own files
/// as soon as it completes, so an interrupted grid leaves finished runs
/// fully readable.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out.join("runs")).context("creating output directory")?;
    fs::create_dir_all(out.join("cache")).context("creating cache directory")?;

    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    atomic_write(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).context("serializing manifest")?,
    )?;

    let grid: Vec<(ExperimentArm, u64)> = config
        .arms
        .iter()
        .flat_map(|arm| config.seeds.iter().map(move |&s| (arm.clone(), s)))
        .collect();

    let summaries: Vec<RunSummary> = grid
        .par_iter()
        .map(|(arm, seed)| run_single(config, arm, *seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(summaries)
}

/// Execute one (arm, seed) cell of the grid and write its artifacts.
pub fn run_single(config: &ExperimentConfig, arm: &ExperimentArm, seed: u64) -> Result<RunSummary> {
    let started = Instant::now();
    let (fed, alloc) = arm.resolve(&config.federation, &config.allocator);
    if fed.synthetic_augmentation && !alloc.allow_scale_override {
        let sizes = config.benchmark.domain_sizes();
        let violations = validate_domain_scales(&sizes, &alloc.domain_scales);
        if !violations.is_empty() {
            bail!(
                "arm `{}`: domain scales {:?} fail validate_domain_scales against sizes {:?} \
                 (violating pairs {:?}); set allow_scale_override to run anyway",
                arm.label,
                alloc.domain_scales,
                sizes,
                violations
            );
        }
    }

    let root = RngStream::from_seed(seed);
    let (private, public) = generate_benchmark(&config.benchmark, &root.derive("benchmark"))?;
    let split = make_federated_split(
        &private,
        &config.benchmark,
        fed.total_clients,
        config.dirichlet_alpha,
        &root.derive("split"),
    )?;

    let topology = config
        .classifier
        .topology(config.benchmark.feature_dim, config.benchmark.class_count);
    let pretrain_rng = root.derive("pretrain");
    let initial_params = if fed.pretraining {
        pretrain(&public, &topology, &config.pretrain, &pretrain_rng)?.0
    } else {
        ParamVector::random_init(topology.clone(), &mut pretrain_rng.derive("init"))
    };

    let generator = if fed.synthetic_augmentation {
        Some(load_or_train_generator(config, &public, seed, &root)?)
    } else {
        None
    };

    let run = run_federation(
        &split,
        &fed,
        FederationDeps {
            initial_params,
            generator: generator.as_ref().map(|g| g as &dyn SyntheticSampler),
            allocator: alloc.clone(),
        },
        &root.derive("federation-run"),
    )?;

    // per-run metrics CSV
    let runs_dir = config.output_dir.join("runs");
    let mut csv = csv_header(config.benchmark.domain_count);
    for (round, report) in &run.history {
        csv.push_str(&csv_row(*round, &arm.label, seed, report));
    }
    let csv_path = runs_dir.join(format!("{}-seed{}.csv", arm.label, seed));
    atomic_write(&csv_path, &csv)?;

    // final model checkpoint
    atomic_write(
        &runs_dir.join(format!("{}-seed{}.params", arm.label, seed)),
        &fedsynth::nn::write_params(&run.final_params),
    )?;

    // round log as line-delimited records
    let mut log = String::new();
    for r in &run.rounds {
        let line = serde_json::json!({
            "round": r.round,
            "selected": r.selected,
            "update_norms": r.update_norms,
            "aggregated_checksum": format!("{:016x}", r.aggregated_checksum),
            "wall_time_secs": r.wall_time_secs,
        });
        log.push_str(&line.to_string());
        log.push('\n');
    }
    atomic_write(&runs_dir.join(format!("{}-seed{}.rounds.jsonl", arm.label, seed)), &log)?;

    // allocation audit for augmented runs
    if fed.synthetic_augmentation {
        let mut audit = String::new();
        for client in &split.clients {
            let input = AllocationInput {
                per_class_counts: client.real().class_counts().to_vec(),
                domain_id: client.domain,
                epsilon: alloc.epsilon,
                domain_scale: alloc.domain_scales[client.domain],
            };
            let plan = synthetic_budget(&input)?;
            writeln!(audit, "client: {}", client.client_id).unwrap();
            audit.push_str(&plan.audit_text(&input));
            audit.push('\n');
        }
        atomic_write(&runs_dir.join(format!("{}-seed{}.plans.txt", arm.label, seed)), &audit)?;
    }

    Ok(RunSummary {
        label: arm.label.clone(),
        seed,
        history: run.history,
        csv_path,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Generator checkpoints are cached by content: public data bytes, generator
/// config and seed. Grid arms sharing those retrain nothing.
fn load_or_train_generator(
    config: &ExperimentConfig,
    public: &fedsynth::core::Dataset,
    seed: u64,
    root: &RngStream,
) -> Result<GeneratorModel> {
    let mut key_bytes = export_dataset(public).into_bytes();
    key_bytes.extend(serde_json::to_string(&config.generator)?.into_bytes());
    key_bytes.extend(seed.to_le_bytes());
    let key = fnv64(key_bytes);
    let path = config.output_dir.join("cache").join(format!("generator-{key:016x}.ckpt"));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(model) = read_generator(&text) {
            return Ok(model);
        }
    }
    let (model, _) = train_generator(public, &config.generator, &root.derive("generator"))?;
    atomic_write(&path, &write_generator(&model))?;
    Ok(model)
}
