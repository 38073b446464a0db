use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fedsynth::core::{export_dataset, RngStream};
use fedsynth::datasynth::generate_benchmark;
use fedsynth::fedengine::pretrain;
use fedsynth::generator::{train_generator, write_generator};
use fedsynth::nn::write_params;
use fedsynth_cli::{build_report, load_config, run_experiment, runner::atomic_write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "fedsynth",
    about = "Deterministic federated-learning simulator with synthetic-sample augmentation",
    version
)]
struct Cli {
    /// Config file merged over the preset/defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named experiment bundle (strategy-grid, scale-grid, client-grid, long-run, desk).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override the config's seed list.
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark datasets and write them with a manifest.
    GenData,
    /// Pretrain the classifier on the public pool and write a checkpoint.
    Pretrain,
    /// Train the diffusion generator on the public pool and write a checkpoint.
    TrainGenerator,
    /// Run the configured experiment grid.
    Run,
    /// Aggregate per-run CSVs in the output directory into a comparison table.
    Report,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Ok(workers) = std::env::var("FEDSYNTH_WORKERS") {
        let n: usize = workers
            .parse()
            .with_context(|| format!("FEDSYNTH_WORKERS must be a number, got `{workers}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }

    let mut config = load_config(cli.preset.as_deref(), cli.config.as_deref())?;
    if !cli.seed.is_empty() {
        config.seeds = cli.seed.clone();
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }

    match cli.command {
        Command::GenData => {
            std::fs::create_dir_all(&config.output_dir)?;
            for &seed in &config.seeds {
                let rng = RngStream::from_seed(seed);
                let (private, public) =
                    generate_benchmark(&config.benchmark, &rng.derive("benchmark"))?;
                let dir = config.output_dir.join(format!("data-seed{seed}"));
                std::fs::create_dir_all(&dir)?;
                atomic_write(&dir.join("private.tsv"), &export_dataset(&private))?;
                atomic_write(&dir.join("public.tsv"), &export_dataset(&public))?;
                let mut realized = Vec::new();
                for j in 0..config.benchmark.domain_count {
                    let mut row = vec![0usize; config.benchmark.class_count];
                    for s in private.samples().iter().filter(|s| s.domain == j) {
                        row[s.label] += 1;
                    }
                    realized.push(row);
                }
                let manifest = serde_json::json!({
                    "seed": seed,
                    "spec": config.benchmark,
                    "private_class_counts_per_domain": realized,
                    "public_class_counts": public.class_counts(),
                });
                atomic_write(
                    &dir.join("manifest.json"),
                    &serde_json::to_string_pretty(&manifest)?,
                )?;
                println!(
                    "wrote {} ({} private, {} public samples)",
                    dir.display(),
                    private.len(),
                    public.len()
                );
            }
        }
        Command::Pretrain => {
            std::fs::create_dir_all(&config.output_dir)?;
            let topology = config
                .classifier
                .topology(config.benchmark.feature_dim, config.benchmark.class_count);
            for &seed in &config.seeds {
                let rng = RngStream::from_seed(seed);
                let (_, public) = generate_benchmark(&config.benchmark, &rng.derive("benchmark"))?;
                let (params, stats) =
                    pretrain(&public, &topology, &config.pretrain, &rng.derive("pretrain"))?;
                let path = config.output_dir.join(format!("pretrained-seed{seed}.params"));
                atomic_write(&path, &write_params(&params))?;
                println!(
                    "seed {seed}: {} epochs, best val loss {:.4}, val accuracy {:.3} -> {}",
                    stats.epochs_run,
                    stats.best_val_loss,
                    stats.val_accuracy,
                    path.display()
                );
            }
        }
        Command::TrainGenerator => {
            std::fs::create_dir_all(&config.output_dir)?;
            for &seed in &config.seeds {
                let rng = RngStream::from_seed(seed);
                let (_, public) = generate_benchmark(&config.benchmark, &rng.derive("benchmark"))?;
                let (model, stats) =
                    train_generator(&public, &config.generator, &rng.derive("generator"))?;
                let path = config.output_dir.join(format!("generator-seed{seed}.ckpt"));
                atomic_write(&path, &write_generator(&model))?;
                println!(
                    "seed {seed}: {} examples, final loss {:.4} -> {}",
                    stats.examples_seen,
                    stats.final_epoch_mean_loss,
                    path.display()
                );
            }
        }
        Command::Run => {
            let summaries = run_experiment(&config)?;
            println!(
                "completed {} runs into {}",
                summaries.len(),
                config.output_dir.display()
            );
            for s in &summaries {
                let report = s.final_report();
                println!(
                    "  {:<18} seed {:>3}  avg acc {:>6.2}%  avg f1 {:>6.2}%  ({:.1}s)",
                    s.label,
                    s.seed,
                    100.0 * report.avg_accuracy,
                    100.0 * report.avg_macro_f1,
                    s.wall_time_secs
                );
            }
            match build_report(&config.output_dir)? {
                Some(table) => {
                    atomic_write(&config.output_dir.join("report.csv"), &table.to_csv())?;
                    println!("\n{}", table.render());
                }
                None => println!("no runs found to aggregate"),
            }
        }
        Command::Report => match build_report(&config.output_dir)? {
            Some(table) => {
                atomic_write(&config.output_dir.join("report.csv"), &table.to_csv())?;
                print!("{}", table.render());
            }
            None => {
                println!("no runs found in {}", config.output_dir.display());
                std::process::exit(1);
            }
        },
    }
    Ok(())
}
