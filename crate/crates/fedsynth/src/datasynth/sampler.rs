//! Class-balanced batch sampling: each batch slot draws a class with
//! probability inversely proportional to its frequency, then a uniform
//! sample of that class.

use crate::core::{Dataset, RngStream};
use crate::error::{Error, Result};

/// p_i = (1/n_i) / Σ_j (1/n_j); classes with n_i = 0 get probability 0.
pub fn class_probabilities(counts: &[usize]) -> Vec<f64> {
    let inv: Vec<f64> = counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { 1.0 / n as f64 })
        .collect();
    let sum: f64 = inv.iter().sum();
    if sum == 0.0 {
        return vec![0.0; counts.len()];
    }
    inv.into_iter().map(|v| v / sum).collect()
}

/// Infinite stream of index batches over one dataset.
#[derive(Debug, Clone)]
pub struct ClassBalancedSampler {
    class_indices: Vec<Vec<usize>>,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    batch_size: usize,
}

impl ClassBalancedSampler {
    pub fn new(dataset: &Dataset, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size 0"));
        }
        if dataset.is_empty() {
            return Err(Error::config("class-balanced sampler over empty data"));
        }
        let classes = dataset.class_count();
        let mut class_indices = vec![Vec::new(); classes];
        for (i, s) in dataset.samples().iter().enumerate() {
            class_indices[s.label].push(i);
        }
        let probabilities = class_probabilities(dataset.class_counts());
        let mut cumulative = Vec::with_capacity(classes);
        let mut acc = 0.0;
        for &p in &probabilities {
            acc += p;
            cumulative.push(acc);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(ClassBalancedSampler { class_indices, probabilities, cumulative, batch_size })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn draw_class(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) | Err(i) => {
                // skip zero-probability classes the search may land on
                let mut i = i.min(self.cumulative.len() - 1);
                while self.probabilities[i] == 0.0 {
                    i += 1;
                }
                i
            }
        }
    }

    /// One batch of dataset indices, each slot drawn i.i.d.
    pub fn next_batch(&self, rng: &mut RngStream) -> Vec<usize> {
        (0..self.batch_size)
            .map(|_| {
                let class = self.draw_class(rng);
                let members = &self.class_indices[class];
                members[rng.uniform_range(members.len())]
            })
            .collect()
    }
}
