//! Shared data model: samples, datasets, client shards, random streams.
//!
//! All types here are immutable after construction; "mutation" means building
//! a new value. That makes them safe to share read-only across worker threads.

mod io;
mod rng;

pub use io::{export_dataset, import_dataset};
pub use rng::{RngStream, StreamLabel};

use crate::error::{Error, Result};

/// One labeled feature vector with its acquisition-domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
    pub domain: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize, domain: usize) -> Self {
        Sample { features, label, domain }
    }
}

/// An ordered collection of samples with cached class/domain histograms.
///
/// `class_counts` and `domain_counts` are always the exact histograms of
/// `samples`; the constructor computes them and the fields are never exposed
/// mutably.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_counts: Vec<usize>,
    domain_counts: Vec<usize>,
    feature_dim: usize,
}

/// Exact class and domain histograms of a sample list.
pub fn histogram(
    samples: &[Sample],
    class_count: usize,
    domain_count: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut classes = vec![0usize; class_count];
    let mut domains = vec![0usize; domain_count];
    for s in samples {
        classes[s.label] += 1;
        domains[s.domain] += 1;
    }
    (classes, domains)
}

impl Dataset {
    /// Build a dataset, validating labels, domains and feature dimensions.
    pub fn new(samples: Vec<Sample>, class_count: usize, domain_count: usize) -> Result<Self> {
        let feature_dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.label >= class_count {
                return Err(Error::config(format!(
                    "sample {i}: label {} out of range (C={class_count})",
                    s.label
                )));
            }
            if s.domain >= domain_count {
                return Err(Error::config(format!(
                    "sample {i}: domain {} out of range (J={domain_count})",
                    s.domain
                )));
            }
            if s.features.len() != feature_dim {
                return Err(Error::config(format!(
                    "sample {i}: feature dim {} != {feature_dim}",
                    s.features.len()
                )));
            }
        }
        let (class_counts, domain_counts) = histogram(&samples, class_count, domain_count);
        Ok(Dataset { samples, class_counts, domain_counts, feature_dim })
    }

    /// Empty dataset with the given histogram widths.
    pub fn empty(class_count: usize, domain_count: usize, feature_dim: usize) -> Self {
        Dataset {
            samples: Vec::new(),
            class_counts: vec![0; class_count],
            domain_counts: vec![0; domain_count],
            feature_dim,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn domain_counts(&self) -> &[usize] {
        &self.domain_counts
    }

    pub fn class_count(&self) -> usize {
        self.class_counts.len()
    }

    pub fn domain_count(&self) -> usize {
        self.domain_counts.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One client's shard: real local data from a single device domain, plus any
/// synthetic samples drawn for it (tagged with the same domain).
#[derive(Debug, Clone)]
pub struct ClientDataset {
    pub client_id: usize,
    pub domain: usize,
    real: Dataset,
    synthetic: Dataset,
}

impl ClientDataset {
    pub fn new(client_id: usize, domain: usize, real: Dataset) -> Result<Self> {
        if let Some(s) = real.samples().iter().find(|s| s.domain != domain) {
            return Err(Error::config(format!(
                "client {client_id}: sample from domain {} in a domain-{domain} client",
                s.domain
            )));
        }
        let synthetic = Dataset::empty(real.class_count(), real.domain_count(), real.feature_dim());
        Ok(ClientDataset { client_id, domain, real, synthetic })
    }

    pub fn real(&self) -> &Dataset {
        &self.real
    }

    pub fn synthetic(&self) -> &Dataset {
        &self.synthetic
    }

    /// Replace the synthetic shard. Samples must carry this client's domain.
    pub fn with_synthetic(&self, synthetic: Dataset) -> Result<Self> {
        if let Some(s) = synthetic.samples().iter().find(|s| s.domain != self.domain) {
            return Err(Error::config(format!(
                "client {}: synthetic sample tagged domain {} != {}",
                self.client_id, s.domain, self.domain
            )));
        }
        Ok(ClientDataset {
            client_id: self.client_id,
            domain: self.domain,
            real: self.real.clone(),
            synthetic,
        })
    }

    /// Real plus synthetic samples, reals first.
    pub fn augmented(&self) -> Vec<&Sample> {
        self.real.samples().iter().chain(self.synthetic.samples()).collect()
    }

    pub fn real_count(&self) -> usize {
        self.real.len()
    }

    pub fn augmented_count(&self) -> usize {
        self.real.len() + self.synthetic.len()
    }
}
