//! Synthetic multi-domain, class-imbalanced benchmarks and their federated
//! splits: Gaussian class clusters pushed through per-domain affine shifts,
//! device-proportional client assignment, Dirichlet label partitioning, and
//! the inverse-frequency batch sampler.

mod benchmark;
mod partition;
mod sampler;

pub use benchmark::{generate_benchmark, scale_counts, BenchmarkSpec};
pub use partition::{
    assign_clients_to_domains, dirichlet_partition, make_federated_split, FederatedSplit,
};
pub use sampler::{class_probabilities, ClassBalancedSampler};
