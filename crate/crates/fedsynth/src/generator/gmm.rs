//! Closed-form Gaussian-mixture baseline sampler: per-class diagonal-
//! covariance EM, with a single full-covariance Gaussian fallback for
//! under-populated classes (and for one requested component, where the
//! full-covariance MLE is exact).

use super::SyntheticSampler;
use crate::core::{Dataset, RngStream, Sample};
use crate::error::{Error, Result};

const VAR_FLOOR: f64 = 1e-6;
const RIDGE: f64 = 1e-9;

#[derive(Debug, Clone)]
enum ClassModel {
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        vars: Vec<Vec<f64>>,
    },
    Gaussian {
        mean: Vec<f64>,
        /// Lower-triangular Cholesky factor of the covariance, row-major.
        chol: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct GmmSampler {
    class_models: Vec<ClassModel>,
    dim: usize,
}

/// Fit per-class mixtures on the public pool by expectation-maximization.
pub fn fit_gmm_baseline(
    data: &Dataset,
    components_per_class: usize,
    rng: &RngStream,
) -> Result<GmmSampler> {
    if components_per_class == 0 {
        return Err(Error::config("gmm: zero components"));
    }
    if data.is_empty() {
        return Err(Error::config("gmm: empty dataset"));
    }
    let dim = data.feature_dim();
    let mut class_models = Vec::with_capacity(data.class_count());
    for c in 0..data.class_count() {
        let points: Vec<&[f64]> = data
            .samples()
            .iter()
            .filter(|s| s.label == c)
            .map(|s| s.features.as_slice())
            .collect();
        if points.is_empty() {
            return Err(Error::config(format!("gmm: class {c} has no samples")));
        }
        let model = if components_per_class == 1 || points.len() < 2 * components_per_class {
            fit_full_gaussian(&points, dim)
        } else {
            fit_diag_mixture(&points, dim, components_per_class, &mut rng.derive("em").derive(c))
        };
        class_models.push(model);
    }
    Ok(GmmSampler { class_models, dim })
}

fn fit_full_gaussian(points: &[&[f64]], dim: usize) -> ClassModel {
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(*p) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; dim * dim];
    for p in points {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    for i in 0..dim {
        cov[i * dim + i] += RIDGE;
    }
    let chol = cholesky(&cov, dim);
    ClassModel::Gaussian { mean, chol }
}

/// Lower-triangular Cholesky; diagonal entries are floored to keep the
/// factorization defined for rank-deficient inputs.
fn cholesky(cov: &[f64], dim: usize) -> Vec<f64> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = cov[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                l[i * dim + j] = sum.max(RIDGE).sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    l
}

/// Squared-distance-weighted seeding: spreads the initial means across the
/// data's modes far more reliably than uniform picks.
fn kmeanspp_seeds(points: &[&[f64]], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut seeds: Vec<Vec<f64>> = vec![points[rng.uniform_range(n)].to_vec()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &seeds[0]))
        .collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.uniform_range(n)
        } else {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        seeds.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, seeds.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    seeds
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn fit_diag_mixture(
    points: &[&[f64]],
    dim: usize,
    k: usize,
    rng: &mut RngStream,
) -> ClassModel {
    let mut best: Option<(f64, ClassModel)> = None;
    for restart in 0..3u64 {
        let (ll, model) = run_diag_em(points, dim, k, &mut rng.derive(restart));
        if best.as_ref().is_none_or(|(b, _)| ll > *b) {
            best = Some((ll, model));
        }
    }
    best.expect("at least one EM restart").1
}

fn run_diag_em(
    points: &[&[f64]],
    dim: usize,
    k: usize,
    rng: &mut RngStream,
) -> (f64, ClassModel) {
    let n = points.len();
    // global per-dimension variance sets the starting spread per component
    let mut gmean = vec![0.0; dim];
    for p in points {
        for (m, v) in gmean.iter_mut().zip(*p) {
            *m += v / n as f64;
        }
    }
    let mut gvar = vec![0.0; dim];
    for p in points {
        for (gv, (v, m)) in gvar.iter_mut().zip(p.iter().zip(&gmean)) {
            *gv += (v - m) * (v - m) / n as f64;
        }
    }
    for v in gvar.iter_mut() {
        *v = (*v / (k * k) as f64).max(VAR_FLOOR);
    }

    let mut means = kmeanspp_seeds(points, k, rng);
    let mut vars: Vec<Vec<f64>> = vec![gvar.clone(); k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; n * k];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = prev_ll;
    for _iter in 0..200 {
        // E step
        ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut logs = vec![0.0; k];
            for (j, lw) in logs.iter_mut().enumerate() {
                *lw = weights[j].max(1e-300).ln() + diag_log_pdf(p, &means[j], &vars[j]);
            }
            let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
            ll += max + z.ln();
            for j in 0..k {
                resp[i * k + j] = ((logs[j] - max).exp()) / z;
            }
        }
        // M step
        for j in 0..k {
            let rsum: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            weights[j] = (rsum / n as f64).max(1e-12);
            if rsum < 1e-9 {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                for (m, v) in mean.iter_mut().zip(*p) {
                    *m += r * v / rsum;
                }
            }
            let mut var = vec![0.0; dim];
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                for (vv, (v, m)) in var.iter_mut().zip(p.iter().zip(&mean)) {
                    *vv += r * (v - m) * (v - m) / rsum;
                }
            }
            for v in var.iter_mut() {
                *v = v.max(VAR_FLOOR);
            }
            means[j] = mean;
            vars[j] = var;
        }
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
        if (ll - prev_ll).abs() < 1e-9 * n as f64 {
            break;
        }
        prev_ll = ll;
    }
    (ll, ClassModel::Mixture { weights, means, vars })
}

fn diag_log_pdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut out = 0.0;
    for ((xv, m), v) in x.iter().zip(mean).zip(var) {
        let d = xv - m;
        out -= 0.5 * (d * d / v + v.ln() + (2.0 * std::f64::consts::PI).ln());
    }
    out
}

impl SyntheticSampler for GmmSampler {
    fn sample(
        &self,
        class_id: usize,
        count: usize,
        domain: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Sample>> {
        let model = self
            .class_models
            .get(class_id)
            .ok_or_else(|| Error::config(format!("gmm: class {class_id} out of range")))?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let features = match model {
                ClassModel::Mixture { weights, means, vars } => {
                    let u = rng.uniform();
                    let mut acc = 0.0;
                    let mut j = weights.len() - 1;
                    for (idx, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            j = idx;
                            break;
                        }
                    }
                    means[j]
                        .iter()
                        .zip(&vars[j])
                        .map(|(m, v)| m + v.sqrt() * rng.normal())
                        .collect()
                }
                ClassModel::Gaussian { mean, chol } => {
                    let z = rng.normal_vec(self.dim);
                    let mut x = mean.clone();
                    for i in 0..self.dim {
                        for (k, zk) in z.iter().enumerate().take(i + 1) {
                            x[i] += chol[i * self.dim + k] * zk;
                        }
                    }
                    x
                }
            };
            out.push(Sample::new(features, class_id, domain));
        }
        Ok(out)
    }

    fn checksum(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for m in &self.class_models {
            match m {
                ClassModel::Mixture { weights, means, vars } => {
                    for &w in weights {
                        eat(w);
                    }
                    for row in means.iter().chain(vars) {
                        for &v in row {
                            eat(v);
                        }
                    }
                }
                ClassModel::Gaussian { mean, chol } => {
                    for &v in mean.iter().chain(chol) {
                        eat(v);
                    }
                }
            }
        }
        h
    }

    fn class_count(&self) -> usize {
        self.class_models.len()
    }
}
