//! Client assignment and data partitioning: device-proportional client
//! counts, Dirichlet label splits within each domain, centralized test set
//! and per-client validation shards.

use super::benchmark::BenchmarkSpec;
use crate::core::{ClientDataset, Dataset, RngStream, Sample};
use crate::error::{Error, Result};

/// The federation's data layout after splitting.
#[derive(Debug, Clone)]
pub struct FederatedSplit {
    pub clients: Vec<ClientDataset>,
    pub clients_per_domain: Vec<usize>,
    pub dirichlet_alpha: f64,
    /// Centralized, untouched test set covering every domain.
    pub test_set: Dataset,
    /// Per-client validation shards, parallel to `clients`.
    pub val_sets: Vec<Dataset>,
}

/// Floor each share, then hand out missing seats by largest fractional
/// remainder; ties go to the lower index.
pub(crate) fn largest_remainder_counts(shares: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor().max(0.0) as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    let missing = total.saturating_sub(assigned);
    for idx in 0..missing {
        out[order[idx % order.len()]] += 1;
    }
    out
}

/// Deterministic, proportional client allocation: quotas K·size_j/Σsize with
/// largest-remainder rounding, then every domain is guaranteed at least one
/// client by taking from the currently largest allocation.
pub fn assign_clients_to_domains(
    total_clients: usize,
    domain_sizes: &[usize],
) -> Result<Vec<usize>> {
    let domains = domain_sizes.len();
    if domains == 0 {
        return Err(Error::config("no domains"));
    }
    if total_clients < domains {
        return Err(Error::config(format!(
            "{total_clients} clients cannot cover {domains} domains"
        )));
    }
    let total_size: usize = domain_sizes.iter().sum();
    if total_size == 0 {
        return Err(Error::config("all domains empty"));
    }
    let shares: Vec<f64> = domain_sizes
        .iter()
        .map(|&s| total_clients as f64 * s as f64 / total_size as f64)
        .collect();
    let mut out = largest_remainder_counts(&shares, total_clients);
    loop {
        let Some(zero) = out.iter().position(|&c| c == 0) else { break };
        let donor = (0..out.len())
            .max_by_key(|&i| (out[i], usize::MAX - i))
            .expect("nonempty");
        out[donor] -= 1;
        out[zero] += 1;
    }
    Ok(out)
}

/// Split one domain's data across clients with per-class Dirichlet(α)
/// proportions. Every sample is assigned exactly once; client ids start at
/// `first_client_id`.
pub fn dirichlet_partition(
    domain_data: &Dataset,
    n_clients: usize,
    alpha: f64,
    rng: &RngStream,
    first_client_id: usize,
) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 {
        return Err(Error::config("dirichlet partition over zero clients"));
    }
    if alpha <= 0.0 {
        return Err(Error::config(format!("dirichlet alpha {alpha} must be > 0")));
    }
    let domain = domain_data
        .samples()
        .first()
        .map(|s| s.domain)
        .unwrap_or(0);
    if domain_data.samples().iter().any(|s| s.domain != domain) {
        return Err(Error::config("dirichlet partition input mixes domains"));
    }

    let classes = domain_data.class_count();
    let mut per_client: Vec<Vec<Sample>> = vec![Vec::new(); n_clients];
    let props_rng = rng.derive("proportions");
    let assign_rng = rng.derive("assignment");
    for c in 0..classes {
        let mut indices: Vec<usize> = domain_data
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == c)
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            continue;
        }
        let mut prop_rng = props_rng.derive(c);
        let mut draws: Vec<f64> = (0..n_clients).map(|_| prop_rng.gamma(alpha)).collect();
        let sum: f64 = draws.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            // numerically degenerate draw: give everything to one client
            let winner = prop_rng.uniform_range(n_clients);
            draws = vec![0.0; n_clients];
            draws[winner] = 1.0;
        }
        let sum: f64 = draws.iter().sum();
        let shares: Vec<f64> = draws
            .iter()
            .map(|g| g / sum * indices.len() as f64)
            .collect();
        let counts = largest_remainder_counts(&shares, indices.len());
        assign_rng.derive(c).shuffle(&mut indices);
        let mut cursor = 0;
        for (k, &take) in counts.iter().enumerate() {
            for &idx in &indices[cursor..cursor + take] {
                per_client[k].push(domain_data.samples()[idx].clone());
            }
            cursor += take;
        }
    }

    per_client
        .into_iter()
        .enumerate()
        .map(|(k, samples)| {
            let ds = Dataset::new(samples, classes, domain_data.domain_count())?;
            ClientDataset::new(first_client_id + k, domain, ds)
        })
        .collect()
}

/// Build the full federated layout from a private dataset:
/// 1. hold out `test_fraction` per (domain, class) cell into the central test set,
/// 2. allocate clients to domains proportionally to the full domain sizes,
/// 3. Dirichlet-partition each domain across its clients,
/// 4. carve `val_fraction` of each client's shard into its validation set.
pub fn make_federated_split(
    private: &Dataset,
    spec: &BenchmarkSpec,
    total_clients: usize,
    dirichlet_alpha: f64,
    rng: &RngStream,
) -> Result<FederatedSplit> {
    let classes = private.class_count();
    let domains = private.domain_count();
    let clients_per_domain = assign_clients_to_domains(total_clients, private.domain_counts())?;

    let test_rng = rng.derive("test-split");
    let mut test = Vec::new();
    let mut train_per_domain: Vec<Vec<Sample>> = vec![Vec::new(); domains];
    for j in 0..domains {
        for c in 0..classes {
            let mut cell: Vec<&Sample> = private
                .samples()
                .iter()
                .filter(|s| s.domain == j && s.label == c)
                .collect();
            if cell.is_empty() {
                continue;
            }
            test_rng.derive(j).derive(c).shuffle(&mut cell);
            let n_test = (cell.len() as f64 * spec.test_fraction).round() as usize;
            for (i, s) in cell.into_iter().enumerate() {
                if i < n_test {
                    test.push(s.clone());
                } else {
                    train_per_domain[j].push(s.clone());
                }
            }
        }
    }
    let test_set = Dataset::new(test, classes, domains)?;

    let part_rng = rng.derive("dirichlet");
    let mut clients = Vec::with_capacity(total_clients);
    let mut first_id = 0;
    for (j, train) in train_per_domain.into_iter().enumerate() {
        let domain_ds = Dataset::new(train, classes, domains)?;
        let split = dirichlet_partition(
            &domain_ds,
            clients_per_domain[j],
            dirichlet_alpha,
            &part_rng.derive(j),
            first_id,
        )?;
        first_id += clients_per_domain[j];
        clients.extend(split);
    }

    let val_rng = rng.derive("val-split");
    let mut val_sets = Vec::with_capacity(clients.len());
    let mut trimmed = Vec::with_capacity(clients.len());
    for client in clients {
        let mut local: Vec<Sample> = client.real().samples().to_vec();
        val_rng.derive(client.client_id).shuffle(&mut local);
        let n_val = (local.len() as f64 * spec.val_fraction).round() as usize;
        let val: Vec<Sample> = local[..n_val].to_vec();
        let keep: Vec<Sample> = local[n_val..].to_vec();
        val_sets.push(Dataset::new(val, classes, domains)?);
        trimmed.push(ClientDataset::new(
            client.client_id,
            client.domain,
            Dataset::new(keep, classes, domains)?,
        )?);
    }

    Ok(FederatedSplit {
        clients: trimmed,
        clients_per_domain,
        dirichlet_alpha,
        test_set,
        val_sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RngStream;

    #[test]
    fn proportional_rule_on_reference_sizes() {
        // quotas (59.36, 20.77, 4.88) → largest remainder (59, 21, 5)
        let got = assign_clients_to_domains(85, &[9615, 3364, 790]).unwrap();
        assert_eq!(got.iter().sum::<usize>(), 85);
        assert_eq!(got, vec![59, 21, 5]);
    }

    #[test]
    fn proportional_rule_k70() {
        // quotas (48.88, 17.10, 4.02) → (49, 17, 4)
        let got = assign_clients_to_domains(70, &[9615, 3364, 790]).unwrap();
        assert_eq!(got.iter().sum::<usize>(), 70);
        assert_eq!(got, vec![49, 17, 4]);
        // ordering by size preserved
        assert!(got[0] >= got[1] && got[1] >= got[2]);
    }

    #[test]
    fn one_client_per_domain_when_k_equals_j() {
        let got = assign_clients_to_domains(3, &[9615, 3364, 790]).unwrap();
        assert_eq!(got, vec![1, 1, 1]);
        let got = assign_clients_to_domains(3, &[10_000, 5, 5]).unwrap();
        assert_eq!(got, vec![1, 1, 1]);
    }

    #[test]
    fn too_few_clients_rejected() {
        assert!(assign_clients_to_domains(2, &[10, 10, 10]).is_err());
    }

    fn single_domain_dataset(class_sizes: &[usize], domain: usize) -> Dataset {
        let mut samples = Vec::new();
        for (c, &n) in class_sizes.iter().enumerate() {
            for i in 0..n {
                samples.push(Sample::new(vec![c as f64, i as f64], c, domain));
            }
        }
        Dataset::new(samples, class_sizes.len(), domain + 1).unwrap()
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = single_domain_dataset(&[5, 3, 2], 0);
        let rng = RngStream::from_seed(1);
        let parts = dirichlet_partition(&ds, 1, 0.5, &rng, 7).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].client_id, 7);
        assert_eq!(parts[0].real().len(), 10);
    }

    #[test]
    fn partition_conserves_every_sample() {
        let ds = single_domain_dataset(&[40, 25, 10], 2);
        let rng = RngStream::from_seed(5);
        let parts = dirichlet_partition(&ds, 4, 0.3, &rng, 0).unwrap();
        let mut all: Vec<Vec<f64>> = parts
            .iter()
            .flat_map(|p| p.real().samples().iter().map(|s| s.features.clone()))
            .collect();
        let mut expect: Vec<Vec<f64>> =
            ds.samples().iter().map(|s| s.features.clone()).collect();
        let key = |v: &Vec<f64>| (v[0] as i64, v[1] as i64);
        all.sort_by_key(key);
        expect.sort_by_key(key);
        assert_eq!(all, expect);
    }

    #[test]
    fn huge_alpha_approaches_uniform_split() {
        // α → ∞: every client's class proportions match the domain's within
        // 2% L1, over 10 trials.
        for trial in 0..10u64 {
            let ds = single_domain_dataset(&[600, 300, 100], 0);
            let rng = RngStream::from_seed(100 + trial);
            let parts = dirichlet_partition(&ds, 4, 1e6, &rng, 0).unwrap();
            let global: Vec<f64> = vec![0.6, 0.3, 0.1];
            for p in &parts {
                let n = p.real().len() as f64;
                let l1: f64 = p
                    .real()
                    .class_counts()
                    .iter()
                    .zip(&global)
                    .map(|(&cnt, g)| (cnt as f64 / n - g).abs())
                    .sum();
                assert!(l1 < 0.02, "trial {trial}: L1 {l1}");
            }
        }
    }

    #[test]
    fn small_alpha_concentrates_mass() {
        // α = 0.1, 5 clients, one class of 1000: the max client share
        // exceeds 0.5 in the majority of 20 trials.
        let mut hits = 0;
        for trial in 0..20u64 {
            let ds = single_domain_dataset(&[1000], 0);
            let rng = RngStream::from_seed(500 + trial);
            let parts = dirichlet_partition(&ds, 5, 0.1, &rng, 0).unwrap();
            let max_share = parts
                .iter()
                .map(|p| p.real().len() as f64 / 1000.0)
                .fold(0.0, f64::max);
            if max_share > 0.5 {
                hits += 1;
            }
        }
        assert!(hits > 10, "only {hits}/20 trials concentrated");
    }

    #[test]
    fn full_split_partitions_the_private_set() {
        let spec = BenchmarkSpec::default_desk();
        let rng = RngStream::from_seed(42);
        let (private, _) = super::super::generate_benchmark(&spec, &rng).unwrap();
        let split =
            make_federated_split(&private, &spec, 20, 0.5, &rng.derive("split")).unwrap();
        assert_eq!(split.clients.len(), 20);
        assert_eq!(split.clients_per_domain.iter().sum::<usize>(), 20);
        // every domain has at least one client; clients are single-domain
        assert!(split.clients_per_domain.iter().all(|&c| c > 0));
        for client in &split.clients {
            assert!(client.real().samples().iter().all(|s| s.domain == client.domain));
        }
        // conservation: test + val + client local == private, as multisets
        let mut collected: Vec<(usize, usize, Vec<u64>)> = Vec::new();
        let push = |acc: &mut Vec<(usize, usize, Vec<u64>)>, s: &Sample| {
            acc.push((
                s.label,
                s.domain,
                s.features.iter().map(|f| f.to_bits()).collect(),
            ));
        };
        for s in split.test_set.samples() {
            push(&mut collected, s);
        }
        for v in &split.val_sets {
            for s in v.samples() {
                push(&mut collected, s);
            }
        }
        for c in &split.clients {
            for s in c.real().samples() {
                push(&mut collected, s);
            }
        }
        let mut expect: Vec<(usize, usize, Vec<u64>)> = Vec::new();
        for s in private.samples() {
            push(&mut expect, s);
        }
        collected.sort();
        expect.sort();
        assert_eq!(collected, expect);
        // test set covers every domain
        assert!(split.test_set.domain_counts().iter().all(|&c| c > 0));
    }

    #[test]
    fn split_is_deterministic() {
        let spec = BenchmarkSpec::default_desk();
        let rng = RngStream::from_seed(42);
        let (private, _) = super::super::generate_benchmark(&spec, &rng).unwrap();
        let a = make_federated_split(&private, &spec, 12, 0.5, &rng.derive("s")).unwrap();
        let b = make_federated_split(&private, &spec, 12, 0.5, &rng.derive("s")).unwrap();
        for (x, y) in a.clients.iter().zip(&b.clients) {
            assert_eq!(x.real(), y.real());
        }
        assert_eq!(a.test_set, b.test_set);
    }
}
