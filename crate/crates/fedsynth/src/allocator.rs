//! Per-client synthetic-sample budgeting from aggregate class counts.
//!
//! Each class gets an imbalance weight equal to its deficit against the
//! client's majority class plus a floor ε, and the per-client budget S is
//! split across classes proportionally to those weights. The module works
//! exclusively on count vectors: no sample- or dataset-level type is
//! reachable from this interface, so only aggregate statistics ever cross
//! the privacy boundary.

use crate::error::{Error, Result};
use std::fmt::Write as _;

/// Aggregate statistics a client exposes to the budgeting rule.
#[derive(Debug, Clone)]
pub struct AllocationInput {
    /// Per-class sample counts of the client's real data.
    pub per_class_counts: Vec<usize>,
    /// The client's device-domain id.
    pub domain_id: usize,
    /// Weight floor ensuring every class receives some budget.
    pub epsilon: f64,
    /// Per-client total synthetic budget for this domain.
    pub domain_scale: f64,
}

/// Integer per-class budgets plus the pre-rounding diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub per_class_synthetic: Vec<usize>,
    pub real_valued_budget: Vec<f64>,
    /// λ = S / Σ w; at λ = 1 augmentation exactly levels the class histogram.
    pub lambda: f64,
}

impl AllocationPlan {
    pub fn total_synthetic(&self) -> usize {
        self.per_class_synthetic.iter().sum()
    }

    /// Audit dump: counts, weights, λ and budgets for one client.
    pub fn audit_text(&self, input: &AllocationInput) -> String {
        let weights = imbalance_weights(&input.per_class_counts, input.epsilon);
        let mut out = String::new();
        writeln!(out, "domain: {}", input.domain_id).unwrap();
        writeln!(out, "epsilon: {}", input.epsilon).unwrap();
        writeln!(out, "scale: {}", input.domain_scale).unwrap();
        writeln!(out, "lambda: {}", self.lambda).unwrap();
        writeln!(out, "class\tcount\tweight\tbudget\tsynthetic").unwrap();
        for c in 0..input.per_class_counts.len() {
            writeln!(
                out,
                "{c}\t{}\t{}\t{}\t{}",
                input.per_class_counts[c],
                weights[c],
                self.real_valued_budget[c],
                self.per_class_synthetic[c]
            )
            .unwrap();
        }
        out
    }
}

/// Class imbalance weights: w_c = max_c' n_c' − n_c + ε.
/// Every weight is ≥ ε and the majority class gets exactly ε.
pub fn imbalance_weights(counts: &[usize], epsilon: f64) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    counts.iter().map(|&n| (max - n) as f64 + epsilon).collect()
}

/// Split the domain budget S across classes proportionally to the imbalance
/// weights: budget_c = λ·w_c with λ = S/Σw. Integerization is floor plus
/// largest fractional remainder (ties to the lower class index), so the
/// integer budgets sum to round(S) exactly.
pub fn synthetic_budget(input: &AllocationInput) -> Result<AllocationPlan> {
    if input.epsilon <= 0.0 {
        return Err(Error::config(format!("epsilon {} must be > 0", input.epsilon)));
    }
    if input.domain_scale < 0.0 {
        return Err(Error::config(format!(
            "domain scale {} must be ≥ 0",
            input.domain_scale
        )));
    }
    if input.per_class_counts.is_empty() {
        return Err(Error::config("no classes"));
    }
    let weights = imbalance_weights(&input.per_class_counts, input.epsilon);
    let weight_sum: f64 = weights.iter().sum();
    let lambda = input.domain_scale / weight_sum;
    let real_valued_budget: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let per_class_synthetic = largest_remainder(&real_valued_budget, input.domain_scale.round());
    Ok(AllocationPlan { per_class_synthetic, real_valued_budget, lambda })
}

/// Floor each share, then hand out the seats missing from `total` in order of
/// decreasing fractional remainder; ties go to the lower index.
fn largest_remainder(shares: &[f64], total: f64) -> Vec<usize> {
    let total = total as usize;
    let mut out: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // stable sort + stable key: lower index wins ties
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    let missing = total.saturating_sub(assigned);
    for &c in order.iter().take(missing) {
        out[c] += 1;
    }
    out
}

/// Check strict anti-monotonicity of scale versus domain size: a domain with
/// strictly more data must have a strictly smaller scale. Returns every
/// violating (i, j) pair with size_i > size_j.
pub fn validate_domain_scales(domain_sizes: &[usize], scales: &[f64]) -> Vec<(usize, usize)> {
    assert_eq!(domain_sizes.len(), scales.len(), "sizes/scales length mismatch");
    let mut violations = Vec::new();
    for i in 0..domain_sizes.len() {
        for j in 0..domain_sizes.len() {
            if domain_sizes[i] > domain_sizes[j] && !(scales[i] < scales[j]) {
                violations.push((i, j));
            }
        }
    }
    violations
}
