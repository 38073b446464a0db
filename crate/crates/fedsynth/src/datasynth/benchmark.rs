//! Benchmark generation: per-(domain, class) Gaussian clusters under
//! invertible, rotation-dominant domain transforms, plus a public pool drawn
//! from mildly perturbed versions of the same transforms.

use crate::core::{Dataset, RngStream, Sample};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Full description of a synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub class_count: usize,
    pub domain_count: usize,
    pub feature_dim: usize,
    /// J×C private sample counts.
    pub class_counts_per_domain: Vec<Vec<usize>>,
    /// Length-C public sample counts.
    pub public_class_counts: Vec<usize>,
    /// Distance of class means from the origin.
    pub class_separation: f64,
    /// Magnitude of each domain's offset vector.
    pub shift_scale: f64,
    /// 0 → identity maps; 1 → full-strength rotations with condition ≤ 3.
    pub transform_strength: f64,
    /// Within-class standard deviation before the domain transform.
    pub noise_scale: f64,
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl BenchmarkSpec {
    /// Desk-scale default: the three-device, five-class count structure at
    /// one tenth of the reference sizes, giving private domain totals
    /// (962, 336, 79) and a public total of 1267.
    pub fn default_desk() -> Self {
        BenchmarkSpec {
            class_count: 5,
            domain_count: 3,
            feature_dim: 16,
            class_counts_per_domain: vec![
                scale_counts(&[133, 469, 609, 8227, 177], 10.0),
                scale_counts(&[222, 549, 591, 1564, 438], 10.0),
                scale_counts(&[54, 208, 194, 270, 64], 10.0),
            ],
            public_class_counts: scale_counts(&[1119, 2593, 2732, 5380, 847], 10.0),
            class_separation: 3.0,
            shift_scale: 2.5,
            transform_strength: 0.6,
            noise_scale: 1.0,
            test_fraction: 0.15,
            val_fraction: 0.10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.domain_count == 0 || self.feature_dim == 0 {
            return Err(Error::config("benchmark: zero class/domain/feature count"));
        }
        if self.class_counts_per_domain.len() != self.domain_count
            || self.class_counts_per_domain.iter().any(|r| r.len() != self.class_count)
        {
            return Err(Error::config("benchmark: count matrix shape mismatch"));
        }
        if self.public_class_counts.len() != self.class_count {
            return Err(Error::config("benchmark: public counts length mismatch"));
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0)
            || !(0.0 < self.val_fraction && self.val_fraction < 1.0)
            || self.test_fraction + self.val_fraction >= 1.0
        {
            return Err(Error::config("benchmark: test/val fractions must lie in (0,1) and sum below 1"));
        }
        if self.class_separation < 0.0 || self.noise_scale < 0.0 || self.shift_scale < 0.0 {
            return Err(Error::config("benchmark: negative scale"));
        }
        if !(0.0..=1.0).contains(&self.transform_strength) {
            return Err(Error::config("benchmark: transform_strength outside [0,1]"));
        }
        Ok(())
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        self.class_counts_per_domain.iter().map(|r| r.iter().sum()).collect()
    }

    /// Reserved domain id tagging public (untyped) samples: one past the
    /// last device domain, so it can never be confused with one downstream.
    pub fn untyped_domain(&self) -> usize {
        self.domain_count
    }
}

/// Scale a count vector by 1/divisor, preserving round(total/divisor) exactly
/// via largest-remainder integerization.
pub fn scale_counts(counts: &[usize], divisor: f64) -> Vec<usize> {
    let shares: Vec<f64> = counts.iter().map(|&n| n as f64 / divisor).collect();
    let total: f64 = shares.iter().sum();
    super::partition::largest_remainder_counts(&shares, total.round() as usize)
}

/// Invertible affine map x ↦ Mx + b for one domain.
#[derive(Debug, Clone)]
pub(crate) struct DomainTransform {
    matrix: Vec<f64>, // d×d row-major
    offset: Vec<f64>,
    dim: usize,
}

impl DomainTransform {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        DomainTransform { matrix, offset: vec![0.0; dim], dim }
    }

    /// Random rotation-dominant map: Givens-rotation products around a
    /// diagonal stretch with condition number ≤ 3^strength, plus an offset of
    /// magnitude `shift_scale`.
    pub fn random(dim: usize, strength: f64, shift_scale: f64, rng: &mut RngStream) -> Self {
        let mut t = Self::identity(dim);
        if strength > 0.0 {
            // log-singular-values in ±(strength·ln√3) keep the condition ≤ 3^strength
            let half_ln3 = 0.5 * 3f64.ln();
            let stretch: Vec<f64> = (0..dim)
                .map(|_| (half_ln3 * strength * (2.0 * rng.uniform() - 1.0)).exp())
                .collect();
            let left = givens_product(dim, strength, rng);
            let right = givens_product(dim, strength, rng);
            // M = R_left · D · R_right
            let mut scaled = right.clone();
            for r in 0..dim {
                for c in 0..dim {
                    scaled[r * dim + c] *= stretch[r];
                }
            }
            t.matrix = mat_mul(&left, &scaled, dim);
        }
        if shift_scale > 0.0 {
            let dir = unit_vector(dim, rng);
            t.offset = dir.iter().map(|v| v * shift_scale).collect();
        }
        t
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.offset.clone();
        for r in 0..self.dim {
            let row = &self.matrix[r * self.dim..(r + 1) * self.dim];
            let mut acc = 0.0;
            for (m, v) in row.iter().zip(x) {
                acc += m * v;
            }
            out[r] += acc;
        }
        out
    }
}

fn mat_mul(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

/// Product of `dim` random plane rotations with angles scaled by `strength`.
fn givens_product(dim: usize, strength: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut m = DomainTransform::identity(dim).matrix;
    if dim < 2 {
        return m;
    }
    for _ in 0..dim {
        let i = rng.uniform_range(dim);
        let mut j = rng.uniform_range(dim - 1);
        if j >= i {
            j += 1;
        }
        let angle = strength * std::f64::consts::PI * (rng.uniform() - 0.5);
        let (s, c) = angle.sin_cos();
        // rows i and j of m ← rotation applied from the left
        for col in 0..dim {
            let vi = m[i * dim + col];
            let vj = m[j * dim + col];
            m[i * dim + col] = c * vi - s * vj;
            m[j * dim + col] = s * vi + c * vj;
        }
    }
    m
}

fn unit_vector(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    let v = rng.normal_vec(dim);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Build the private (typed) and public (untyped) datasets.
///
/// Each (domain, class) cell holds exactly the requested number of samples:
/// x = M_j (μ_c + noise·ε) + b_j. Public samples mix the domains uniformly
/// through jittered transforms and carry the reserved untyped domain id.
pub fn generate_benchmark(spec: &BenchmarkSpec, rng: &RngStream) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let d = spec.feature_dim;

    let mut means_rng = rng.derive("class-means");
    let class_means: Vec<Vec<f64>> = (0..spec.class_count)
        .map(|_| {
            let u = unit_vector(d, &mut means_rng);
            u.into_iter().map(|v| v * spec.class_separation).collect()
        })
        .collect();

    let mut transform_rng = rng.derive("transforms");
    let transforms: Vec<DomainTransform> = (0..spec.domain_count)
        .map(|_| {
            DomainTransform::random(d, spec.transform_strength, spec.shift_scale, &mut transform_rng)
        })
        .collect();

    let private_rng = rng.derive("private");
    let mut private = Vec::new();
    for (j, row) in spec.class_counts_per_domain.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let mut cell_rng = private_rng.derive(j).derive(c);
            for _ in 0..count {
                let mut x0 = class_means[c].clone();
                for v in x0.iter_mut() {
                    *v += spec.noise_scale * cell_rng.normal();
                }
                private.push(Sample::new(transforms[j].apply(&x0), c, j));
            }
        }
    }
    let private = Dataset::new(private, spec.class_count, spec.domain_count)?;

    let public_rng = rng.derive("public");
    let untyped = spec.untyped_domain();
    let jitter = 0.25 * spec.shift_scale / (d as f64).sqrt();
    let mut public = Vec::new();
    for (c, &count) in spec.public_class_counts.iter().enumerate() {
        let mut cell_rng = public_rng.derive(c);
        for _ in 0..count {
            let j = cell_rng.uniform_range(spec.domain_count);
            let mut x0 = class_means[c].clone();
            for v in x0.iter_mut() {
                *v += spec.noise_scale * cell_rng.normal();
            }
            let mut x = transforms[j].apply(&x0);
            for v in x.iter_mut() {
                *v += jitter * cell_rng.normal();
            }
            public.push(Sample::new(x, c, untyped));
        }
    }
    let public = Dataset::new(public, spec.class_count, untyped + 1)?;

    Ok((private, public))
}
