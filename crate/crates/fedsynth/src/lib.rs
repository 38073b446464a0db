//! Deterministic desk-scale simulator of federated classification under
//! joint class and device-domain imbalance.
//!
//! The pipeline: build a synthetic multi-domain benchmark, pretrain a
//! classifier on public data, train a class-conditional diffusion generator
//! server-side, allocate per-client synthetic budgets from aggregate class
//! counts, then run federated rounds (FedAvg/FedProx/MOON) over the augmented
//! client shards and report per-domain metrics.
//!
//! Everything is driven by splittable random streams, so a given
//! (config, seed) reproduces bit-identical results.

pub mod allocator;
pub mod core;
pub mod datasynth;
mod error;
pub mod fedengine;
pub mod generator;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
