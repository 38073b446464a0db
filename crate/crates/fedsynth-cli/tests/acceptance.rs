//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured values. Oracles here are written independently of the
//! library code paths they check.

use fedsynth::allocator::{imbalance_weights, synthetic_budget, AllocationInput};
use fedsynth::core::{Dataset, RngStream, Sample};
use fedsynth::datasynth::{generate_benchmark, make_federated_split, ClassBalancedSampler};
use fedsynth::fedengine::{
    aggregate, local_train, run_federation, AllocatorSettings, FederationConfig, FederationDeps,
    LocalObjective, Strategy,
};
use fedsynth::generator::{
    cosine_schedule, train_generator, Conditioning, DenoiserModel, GeneratorConfig,
    GeneratorModel, SyntheticSampler,
};
use fedsynth::nn::{Activation, Mat, MlpTopology, Mode, ParamVector};
use fedsynth_cli::{run_experiment, ExperimentArm, ExperimentConfig, RunSummary};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

// ---------------------------------------------------------------------------
// shared desk-scale experiment grid (criteria 8-11)
// ---------------------------------------------------------------------------

struct Grid {
    summaries_a: Vec<RunSummary>,
    dir_a: PathBuf,
    dir_b: PathBuf,
    elapsed_secs: f64,
}

fn acceptance_config(dir: PathBuf) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.federation.total_clients = 20;
    config.federation.active_per_round = 6;
    config.federation.rounds = 40;
    config.seeds = vec![1, 2, 3, 4, 5];
    config.arms = vec![
        ExperimentArm::new("fedavg", Strategy::FedAvg, false, true),
        ExperimentArm::new("fedssg", Strategy::FedAvg, true, true),
        ExperimentArm::new("fedavg-scratch", Strategy::FedAvg, false, false),
    ];
    config.output_dir = dir;
    config
}

fn grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-grid");
        let dir_a = base.join("first");
        let dir_b = base.join("second");
        let _ = std::fs::remove_dir_all(&base);
        let start = Instant::now();
        let summaries_a = run_experiment(&acceptance_config(dir_a.clone())).expect("grid run A");
        let elapsed_secs = start.elapsed().as_secs_f64();
        run_experiment(&acceptance_config(dir_b.clone())).expect("grid run B");
        Grid { summaries_a, dir_a, dir_b, elapsed_secs }
    })
}

fn final_accuracy(grid: &Grid, label: &str, seed: u64) -> (Vec<f64>, f64) {
    let run = grid
        .summaries_a
        .iter()
        .find(|s| s.label == label && s.seed == seed)
        .unwrap_or_else(|| panic!("missing run {label}/{seed}"));
    let report = run.final_report();
    (report.accuracy.clone(), report.avg_accuracy)
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

/// Dyadic ε values keep integer+ε arithmetic exact for the λ = 1 check.
fn random_allocation_instance(rng: &mut RngStream) -> (Vec<usize>, f64, f64) {
    let classes = 2 + rng.uniform_range(5); // C ≤ 6
    let counts: Vec<usize> = (0..classes).map(|_| rng.uniform_range(51)).collect();
    let epsilon = (1 + rng.uniform_range(12)) as f64 * 0.25;
    let scale = rng.uniform() * 200.0;
    (counts, epsilon, scale)
}

fn population_variance(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

#[test]
fn c01_allocation_oracle() {
    let start = Instant::now();
    let mut rng = RngStream::from_seed(0xA110C).derive("instances");
    for i in 0..1000 {
        let (counts, epsilon, scale) = random_allocation_instance(&mut rng);
        let plan = synthetic_budget(&AllocationInput {
            per_class_counts: counts.clone(),
            domain_id: 0,
            epsilon,
            domain_scale: scale,
        })
        .expect("valid instance");
        // independent brute-force evaluation of the weight and budget rules
        let max = *counts.iter().max().unwrap() as f64;
        let oracle_weights: Vec<f64> =
            counts.iter().map(|&n| max - n as f64 + epsilon).collect();
        let wsum: f64 = oracle_weights.iter().sum();
        for (c, w) in oracle_weights.iter().enumerate() {
            let oracle_budget = scale * w / wsum;
            let got = plan.real_valued_budget[c];
            assert!(
                (got - oracle_budget).abs() < 1e-12,
                "instance {i} class {c}: {got} vs oracle {oracle_budget}"
            );
        }
        assert_eq!(
            plan.per_class_synthetic.iter().sum::<usize>(),
            scale.round() as usize,
            "instance {i}: integer budgets must sum to round(S)"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "allocation oracle took {elapsed:.3}s (budget 1s)");
    println!("criterion 1 PASS: 1000 instances within 1e-12, totals exact, {elapsed:.3}s");
}

#[test]
fn c02_variance_contraction() {
    let mut rng = RngStream::from_seed(0xA110C).derive("variance");
    let mut checked = 0;
    for _ in 0..1000 {
        let (counts, epsilon, _) = random_allocation_instance(&mut rng);
        let weights = imbalance_weights(&counts, epsilon);
        let wsum: f64 = weights.iter().sum();
        let scale = rng.uniform() * wsum; // λ ∈ [0, 1]
        let plan = synthetic_budget(&AllocationInput {
            per_class_counts: counts.clone(),
            domain_id: 0,
            epsilon,
            domain_scale: scale,
        })
        .unwrap();
        let augmented: Vec<f64> = counts
            .iter()
            .zip(&plan.real_valued_budget)
            .map(|(&n, b)| n as f64 + b)
            .collect();
        let counts_f: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
        let expected = (1.0 - plan.lambda).powi(2) * population_variance(&counts_f);
        let got = population_variance(&augmented);
        assert!(
            (got - expected).abs() < 1e-9,
            "λ={}: variance {got} vs (1-λ)²·var = {expected}",
            plan.lambda
        );

        // exact-zero case: S = Σw ⇒ λ = 1
        let plan = synthetic_budget(&AllocationInput {
            per_class_counts: counts.clone(),
            domain_id: 0,
            epsilon,
            domain_scale: wsum,
        })
        .unwrap();
        assert_eq!(plan.lambda, 1.0);
        let augmented: Vec<f64> = counts
            .iter()
            .zip(&plan.real_valued_budget)
            .map(|(&n, b)| n as f64 + b)
            .collect();
        assert_eq!(
            population_variance(&augmented),
            0.0,
            "variance must be exactly zero at λ = 1 (counts {counts:?}, ε {epsilon})"
        );
        checked += 1;
    }
    println!("criterion 2 PASS: {checked} instances contract by (1-λ)², exactly 0 at λ=1");
}

struct GradCase {
    name: &'static str,
    rel_err: f64,
}

#[test]
fn c03_gradient_suite() {
    let start = Instant::now();
    let rng = RngStream::from_seed(0x96AD).derive("cases");
    let mut cases: Vec<GradCase> = Vec::new();
    let step = 1e-5;
    let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);

    for i in 0..60u64 {
        let case_rng = rng.derive(i);
        let mut crng = case_rng.clone();
        let batch = 1 + crng.uniform_range(8);
        if i % 4 == 3 {
            // diffusion MSE+L1 over the denoiser (network + embeddings)
            let dim = 2 + crng.uniform_range(3);
            let classes = 2 + crng.uniform_range(2);
            let hidden = vec![2 + crng.uniform_range(6)];
            let mut model = DenoiserModel::init(dim, classes, &hidden, 4, 3, 16, &mut crng)
                .expect("denoiser");
            let x_rows: Vec<Vec<f64>> =
                (0..batch).map(|_| crng.normal_vec(dim)).collect();
            let ts: Vec<usize> = (0..batch).map(|_| 1 + crng.uniform_range(16)).collect();
            let conds: Vec<Conditioning> = (0..batch)
                .map(|_| {
                    if crng.uniform() < 0.25 {
                        Conditioning::Null
                    } else {
                        Conditioning::Class(crng.uniform_range(classes))
                    }
                })
                .collect();
            // targets offset away from the untrained predictions keep the
            // residuals clear of the L1 kink at the finite-difference step
            let x_t = Mat::from_rows(&x_rows);
            let target_rows: Vec<Vec<f64>> = (0..batch)
                .map(|_| (0..dim).map(|_| crng.normal() + 2.0).collect())
                .collect();
            let target = Mat::from_rows(&target_rows);
            let (_, grad) = model.loss_and_gradient(&x_t, &ts, &conds, &target);
            let mut worst = 0.0f64;
            for p in 0..model.param_len() {
                let orig = model.params()[p];
                model.params_mut()[p] = orig + step;
                let lp = model.loss(&x_t, &ts, &conds, &target);
                model.params_mut()[p] = orig - step;
                let lm = model.loss(&x_t, &ts, &conds, &target);
                model.params_mut()[p] = orig;
                let fd = (lp - lm) / (2.0 * step);
                worst = worst.max(rel(fd, grad[p]));
            }
            cases.push(GradCase { name: "diffusion-mse-l1", rel_err: worst });
        } else {
            let input_dim = 2 + crng.uniform_range(3);
            let classes = 2 + crng.uniform_range(3);
            let layers = crng.uniform_range(3); // ≤ 3 layers incl. output
            let trunk: Vec<usize> =
                (0..layers).map(|_| 2 + crng.uniform_range(7)).collect();
            let head: Vec<usize> = if crng.uniform() < 0.5 && layers > 0 {
                vec![2 + crng.uniform_range(7)]
            } else {
                vec![]
            };
            // tanh keeps the loss smooth at the finite-difference step scale;
            // dropout is exercised through a replayed mask stream
            let dropout = if !head.is_empty() && crng.uniform() < 0.5 { 0.3 } else { 0.0 };
            let topo = MlpTopology {
                input_dim,
                trunk_layers: trunk,
                head_layers: head,
                output_dim: classes,
                activation: Activation::Tanh,
                dropout_prob: dropout,
            };
            let params = ParamVector::random_init(topo.clone(), &mut crng);
            let rows: Vec<Vec<f64>> = (0..batch).map(|_| crng.normal_vec(input_dim)).collect();
            let inputs = Mat::from_rows(&rows);
            let labels: Vec<usize> =
                (0..batch).map(|_| crng.uniform_range(classes)).collect();
            let anchor = ParamVector::random_init(topo.clone(), &mut crng);
            let global = ParamVector::random_init(topo.clone(), &mut crng);
            let previous = ParamVector::random_init(topo.clone(), &mut crng);
            let (objective, name) = match i % 4 {
                0 => (LocalObjective::CrossEntropy, "cross-entropy"),
                1 => (LocalObjective::Proximal { mu: 0.3, anchor: &anchor }, "ce+proximal"),
                _ => (
                    LocalObjective::Contrastive {
                        mu: 1.0,
                        tau: 0.5,
                        global: &global,
                        previous: &previous,
                    },
                    "ce+contrastive",
                ),
            };
            let mode = if dropout > 0.0 { Mode::Train } else { Mode::Eval };
            let mask_stream = case_rng.derive("mask");
            let (_, grad) = fedsynth::fedengine::classifier_loss_and_gradient(
                &params,
                &inputs,
                &labels,
                &objective,
                mode,
                &mut mask_stream.clone(),
            )
            .unwrap();
            let mut p = params.clone();
            let mut worst = 0.0f64;
            for idx in 0..p.len() {
                let orig = p.values()[idx];
                p.values_mut()[idx] = orig + step;
                let lp = fedsynth::fedengine::classifier_loss(
                    &p, &inputs, &labels, &objective, mode, &mut mask_stream.clone(),
                )
                .unwrap();
                p.values_mut()[idx] = orig - step;
                let lm = fedsynth::fedengine::classifier_loss(
                    &p, &inputs, &labels, &objective, mode, &mut mask_stream.clone(),
                )
                .unwrap();
                p.values_mut()[idx] = orig;
                let fd = (lp - lm) / (2.0 * step);
                worst = worst.max(rel(fd, grad[idx]));
            }
            cases.push(GradCase { name, rel_err: worst });
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(cases.len() >= 50, "only {} cases", cases.len());
    let mut per_kind: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for case in &cases {
        assert!(
            case.rel_err < 1e-4,
            "{}: relative error {} exceeds 1e-4",
            case.name,
            case.rel_err
        );
        let entry = per_kind.entry(case.name).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 = entry.1.max(case.rel_err);
    }
    assert!(elapsed < 30.0, "gradient suite took {elapsed:.1}s (budget 30s)");
    println!(
        "criterion 3 PASS: {} cases in {elapsed:.1}s, worst per loss: {:?}",
        cases.len(),
        per_kind
    );
}

#[test]
fn c04_aggregation_exactness() {
    // (a) weighted mean vs a brute-force oracle
    let mut rng = RngStream::from_seed(0xA66).derive("agg");
    let topo = MlpTopology {
        input_dim: 3,
        trunk_layers: vec![4],
        head_layers: vec![],
        output_dim: 2,
        activation: Activation::Tanh,
        dropout_prob: 0.0,
    };
    for _ in 0..200 {
        let n = 1 + rng.uniform_range(8);
        let updates: Vec<(ParamVector, f64)> = (0..n)
            .map(|_| {
                let p = ParamVector::random_init(topo.clone(), &mut rng);
                let w = rng.uniform() * 10.0 + 0.01;
                (p, w)
            })
            .collect();
        let got = aggregate(&updates).unwrap();
        let wsum: f64 = updates.iter().map(|(_, w)| w).sum();
        for i in 0..got.len() {
            let oracle: f64 =
                updates.iter().map(|(p, w)| p.values()[i] * w).sum::<f64>() / wsum;
            assert!((got.values()[i] - oracle).abs() < 1e-12);
        }
    }

    // (b) permuting local-training execution order changes nothing
    let spec = fedsynth::datasynth::BenchmarkSpec::default_desk();
    let root = RngStream::from_seed(404);
    let (private, _) = generate_benchmark(&spec, &root.derive("benchmark")).unwrap();
    let split = make_federated_split(&private, &spec, 6, 0.5, &root.derive("split")).unwrap();
    let mut config = FederationConfig {
        total_clients: 6,
        active_per_round: 6,
        rounds: 1,
        local_epochs: 2,
        ..FederationConfig::default()
    };
    let global = ParamVector::random_init(
        MlpTopology::classifier_default(spec.feature_dim, spec.class_count),
        &mut root.derive("init"),
    );
    let train_one = |id: usize| {
        let client_rng = root.derive("round").derive(1usize).derive("client").derive(id);
        local_train(&split.clients[id], &global, None, &config, &client_rng).unwrap()
    };
    let forward_order: Vec<(usize, (ParamVector, f64))> =
        (0..6).map(|id| (id, train_one(id))).collect();
    let reverse_order: Vec<(usize, (ParamVector, f64))> =
        (0..6).rev().map(|id| (id, train_one(id))).collect();
    let assemble = |mut results: Vec<(usize, (ParamVector, f64))>| {
        results.sort_by_key(|(id, _)| *id);
        aggregate(&results.into_iter().map(|(_, u)| u).collect::<Vec<_>>()).unwrap()
    };
    let a = assemble(forward_order);
    let b = assemble(reverse_order);
    assert_eq!(a.checksum(), b.checksum(), "execution order leaked into the aggregate");

    // (c) μ = 0 strategies are bit-identical to FedAvg over 10 rounds
    config.rounds = 10;
    config.active_per_round = 3;
    config.eval_interval = 10;
    let deps = || FederationDeps {
        initial_params: global.clone(),
        generator: None,
        allocator: AllocatorSettings::default(),
    };
    let fed_rng = root.derive("fed");
    let run_with = |strategy: Strategy, prox_mu: f64, moon_mu: f64| {
        let mut c = config.clone();
        c.strategy = strategy;
        c.prox_mu = prox_mu;
        c.moon_mu = moon_mu;
        run_federation(&split, &c, deps(), &fed_rng).unwrap()
    };
    let fedavg = run_with(Strategy::FedAvg, 0.0, 0.0);
    let fedprox0 = run_with(Strategy::FedProx, 0.0, 1.0);
    let moon0 = run_with(Strategy::Moon, 0.01, 0.0);
    for round in 0..10 {
        assert_eq!(
            fedavg.rounds[round].aggregated_checksum,
            fedprox0.rounds[round].aggregated_checksum,
            "FedProx(μ=0) diverged from FedAvg at round {round}"
        );
        assert_eq!(
            fedavg.rounds[round].aggregated_checksum,
            moon0.rounds[round].aggregated_checksum,
            "MOON(μ=0) diverged from FedAvg at round {round}"
        );
    }
    println!("criterion 4 PASS: oracle within 1e-12, order-invariant, μ=0 reductions bit-identical");
}

#[test]
fn c05_sampler_fidelity() {
    let counts = [222usize, 549, 591, 1564, 438];
    let mut samples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(Sample::new(vec![i as f64], c, 0));
        }
    }
    let dataset = Dataset::new(samples, counts.len(), 1).unwrap();
    let sampler = ClassBalancedSampler::new(&dataset, 100).unwrap();
    // independent evaluation of p_i = (1/n_i)/Σ(1/n_j)
    let inv: Vec<f64> = counts.iter().map(|&n| 1.0 / n as f64).collect();
    let inv_sum: f64 = inv.iter().sum();
    let p: Vec<f64> = inv.iter().map(|v| v / inv_sum).collect();

    let mut rng = RngStream::from_seed(0x5A3).derive("draws");
    let draws = 10_000;
    let mut hits = vec![0usize; counts.len()];
    for _ in 0..draws / 100 {
        for idx in sampler.next_batch(&mut rng) {
            hits[dataset.samples()[idx].label] += 1;
        }
    }
    let mut chi2 = 0.0;
    for (c, &h) in hits.iter().enumerate() {
        let expect = draws as f64 * p[c];
        chi2 += (h as f64 - expect) * (h as f64 - expect) / expect;
    }
    // survival function of χ²(4): Q(x) = e^{-x/2}·(1 + x/2)
    let p_value = (-chi2 / 2.0).exp() * (1.0 + chi2 / 2.0);
    assert!(
        p_value > 0.001,
        "chi-square {chi2:.2} gives p {p_value:.5} ≤ 0.001 (hits {hits:?})"
    );
    println!("criterion 5 PASS: chi-square {chi2:.2}, p {p_value:.3} over {draws} draws");
}

#[test]
fn c06_schedule_and_cfg() {
    let schedule = cosine_schedule(512).unwrap();
    assert_eq!(schedule.alpha_bar(0), 1.0, "ᾱ_0 must be exactly 1");
    assert!(
        schedule.alpha_bar_table().windows(2).all(|w| w[1] < w[0]),
        "ᾱ must strictly decrease"
    );
    assert!(schedule.alpha_bar(512) < 0.01, "ᾱ_T = {}", schedule.alpha_bar(512));

    let mut rng = RngStream::from_seed(77).derive("cfg");
    let denoiser = DenoiserModel::init(3, 4, &[8], 4, 2, 512, &mut rng).unwrap();
    let x = Mat::from_rows(&[vec![0.3, -0.8, 0.2], vec![1.1, 0.4, -0.6]]);
    let uncond = denoiser.predict(&x, 100, Conditioning::Null);
    let cond = denoiser.predict(&x, 100, Conditioning::Class(2));
    for (g, expect) in [(0.0, &uncond), (1.0, &cond)] {
        let model = GeneratorModel::new(
            denoiser.clone(),
            schedule.clone(),
            g,
            true,
            vec![0.0; 3],
            vec![1.0; 3],
        );
        let got = model.cfg_predict(&x, 100, 2);
        assert_eq!(got.data(), expect.data(), "guidance {g} must reproduce its branch exactly");
    }
    println!("criterion 6 PASS: cosine schedule invariants hold, CFG exact at g ∈ {{0, 1}}");
}

#[test]
fn c07_generator_conditional_fidelity() {
    let start = Instant::now();
    let truth = [[-3.0, 0.0], [3.0, 0.0]];
    for seed in [101u64, 102, 103] {
        let mut data_rng = RngStream::from_seed(seed).derive("data");
        let mut samples = Vec::new();
        for class in 0..2usize {
            for _ in 0..1000 {
                samples.push(Sample::new(
                    vec![truth[class][0] + data_rng.normal(), data_rng.normal()],
                    class,
                    0,
                ));
            }
        }
        let data = Dataset::new(samples, 2, 1).unwrap();
        let config = GeneratorConfig {
            diffusion_steps: 128,
            hidden_layers: vec![64, 64],
            epochs: 400,
            batch_size: 128,
            guidance_scale: 5.0,
            ..GeneratorConfig::default()
        };
        let (model, _) =
            train_generator(&data, &config, &RngStream::from_seed(seed).derive("train")).unwrap();
        for class in 0..2usize {
            let mut srng = RngStream::from_seed(seed).derive("sample").derive(class);
            let out = model.sample(class, 500, 0, &mut srng).unwrap();
            let mut mean = [0.0f64; 2];
            let mut agree = 0usize;
            for s in &out {
                mean[0] += s.features[0] / 500.0;
                mean[1] += s.features[1] / 500.0;
                // Bayes rule for two unit-covariance Gaussians: nearer mean wins
                let d0 = (s.features[0] - truth[0][0]).powi(2)
                    + (s.features[1] - truth[0][1]).powi(2);
                let d1 = (s.features[0] - truth[1][0]).powi(2)
                    + (s.features[1] - truth[1][1]).powi(2);
                let bayes = if d0 <= d1 { 0 } else { 1 };
                if bayes == class {
                    agree += 1;
                }
            }
            let dist = ((mean[0] - truth[class][0]).powi(2)
                + (mean[1] - truth[class][1]).powi(2))
            .sqrt();
            let agreement = agree as f64 / 500.0;
            assert!(
                dist < 0.5,
                "seed {seed} class {class}: sample mean ({}, {}) is {dist:.3} from truth",
                mean[0],
                mean[1]
            );
            assert!(
                agreement >= 0.80,
                "seed {seed} class {class}: Bayes agreement {agreement:.3} < 0.80"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "fidelity check took {elapsed:.0}s (budget 300s)");
    println!("criterion 7 PASS: 3 seeds, class means within 0.5, Bayes agreement ≥ 80%, {elapsed:.0}s");
}

#[test]
fn c08_device_gap() {
    let grid = grid();
    let mut gaps = Vec::new();
    for seed in [1u64, 2, 3] {
        let (per_domain, _) = final_accuracy(grid, "fedavg", seed);
        let gap = per_domain[0] - (per_domain[1] + per_domain[2]) / 2.0;
        gaps.push(gap);
    }
    let mean_gap = 100.0 * gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(
        mean_gap > 5.0,
        "largest-domain advantage only {mean_gap:.1} points (need > 5)"
    );
    println!("criterion 8 PASS: largest domain leads the small-domain mean by {mean_gap:.1} points");
}

#[test]
fn c09_synthetic_augmentation_gain() {
    let grid = grid();
    let mut avg_gains = Vec::new();
    let mut largest_gain_on_minor = 0;
    for seed in [1u64, 2, 3, 4, 5] {
        let (fa_domains, fa_avg) = final_accuracy(grid, "fedavg", seed);
        let (fs_domains, fs_avg) = final_accuracy(grid, "fedssg", seed);
        avg_gains.push(fs_avg - fa_avg);
        let gains: Vec<f64> = fs_domains
            .iter()
            .zip(&fa_domains)
            .map(|(s, a)| s - a)
            .collect();
        let best = gains
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if best != 0 {
            largest_gain_on_minor += 1;
        }
    }
    let mean_gain = 100.0 * avg_gains.iter().sum::<f64>() / avg_gains.len() as f64;
    assert!(
        mean_gain >= 1.0,
        "synthetic augmentation gains only {mean_gain:.2} points on average (need ≥ 1.0)"
    );
    assert!(
        largest_gain_on_minor >= 4,
        "largest per-domain gain fell on the largest domain in {} of 5 seeds",
        5 - largest_gain_on_minor
    );
    assert!(
        grid.elapsed_secs < 900.0,
        "experiment took {:.0}s (budget 900s)",
        grid.elapsed_secs
    );
    println!(
        "criterion 9 PASS: +{mean_gain:.2} points avg accuracy over 5 seeds, largest gain on a \
         non-largest domain in {largest_gain_on_minor}/5 seeds, grid ran in {:.0}s",
        grid.elapsed_secs
    );
}

#[test]
fn c10_pretraining_benefit() {
    let grid = grid();
    let mean = |label: &str| {
        [1u64, 2, 3, 4, 5]
            .iter()
            .map(|&s| final_accuracy(grid, label, s).1)
            .sum::<f64>()
            / 5.0
    };
    let pretrained = mean("fedavg");
    let scratch = mean("fedavg-scratch");
    assert!(
        pretrained >= scratch,
        "pretrained {pretrained:.4} < scratch {scratch:.4}"
    );
    println!(
        "criterion 10 PASS: pretrained {:.1}% ≥ scratch {:.1}% average accuracy",
        100.0 * pretrained,
        100.0 * scratch
    );
}

#[test]
fn c11_determinism() {
    let grid = grid();
    let runs_a = grid.dir_a.join("runs");
    let runs_b = grid.dir_b.join("runs");
    let mut compared = 0;
    let mut names: Vec<_> = std::fs::read_dir(&runs_a)
        .expect("first run dir")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no CSV reports produced");
    for name in names {
        let a = std::fs::read(runs_a.join(&name)).expect("csv A");
        let b = std::fs::read(runs_b.join(&name)).expect("csv B");
        assert_eq!(
            a,
            b,
            "{} differs between identically seeded executions",
            name.to_string_lossy()
        );
        compared += 1;
    }
    println!("criterion 11 PASS: {compared} CSV reports byte-identical across two executions");
}
