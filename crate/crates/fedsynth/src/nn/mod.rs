//! Minimal differentiable classifier stack: an MLP with an explicit
//! trunk/head split, composite losses, optimizers and exact reverse-mode
//! gradients. All learning-path arithmetic is f64.
//!
//! The trunk plays the encoder role and the head the classifier role: head
//! hidden layers get per-sample feature standardization (learnable
//! scale/shift), the activation and inverted dropout; trunk hidden layers are
//! plain linear + activation. The last trunk activation is exposed as the
//! representation used by contrastive local training.

mod checkpoint;
mod loss;
mod mat;
mod mlp;
mod optim;

pub use checkpoint::{read_params, write_params};
pub use loss::{contrastive_moon, cross_entropy, mse_plus_l1, proximal};
pub use mat::Mat;
pub use mlp::{backward, features_matrix, forward, ForwardPass, Mode};
pub(crate) use mlp::{backward_raw, forward_raw};
pub use optim::{OptimizerKind, OptimizerState, ParamGroup, PlateauSchedule};

use crate::core::RngStream;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given pre-activation `z` and activation output `a`.
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Shape of the classifier: trunk widths, head widths, output classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTopology {
    pub input_dim: usize,
    pub trunk_layers: Vec<usize>,
    pub head_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_prob: f64,
}

impl MlpTopology {
    /// Desk-scale default classifier: trunk 16→32→32, head 32→16→C,
    /// dropout 0.3 in the head.
    pub fn classifier_default(input_dim: usize, classes: usize) -> Self {
        MlpTopology {
            input_dim,
            trunk_layers: vec![32, 32],
            head_layers: vec![16],
            output_dim: classes,
            activation: Activation::Relu,
            dropout_prob: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::config("topology: zero input or output dim"));
        }
        if self.trunk_layers.iter().chain(&self.head_layers).any(|&w| w == 0) {
            return Err(Error::config("topology: zero-width layer"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config(format!(
                "topology: dropout {} outside [0,1)",
                self.dropout_prob
            )));
        }
        Ok(())
    }

    /// Dimension of the trunk output (the contrastive feature space).
    pub fn feature_dim(&self) -> usize {
        *self.trunk_layers.last().unwrap_or(&self.input_dim)
    }

    pub fn param_count(&self) -> usize {
        LayerPlan::new(self).total_len
    }

    pub fn trunk_param_count(&self) -> usize {
        LayerPlan::new(self).trunk_len
    }
}

/// Offsets of one linear layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: usize,
    pub b: usize,
}

/// Head hidden layer: linear + feature standardization parameters.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadLayerSpec {
    pub linear: LinearSpec,
    pub ln_gain: usize,
    pub ln_bias: usize,
}

/// Flat-layout plan for a topology; the single source of truth for offsets.
#[derive(Debug, Clone)]
pub(crate) struct LayerPlan {
    pub trunk: Vec<LinearSpec>,
    pub head: Vec<HeadLayerSpec>,
    pub output: LinearSpec,
    pub trunk_len: usize,
    pub total_len: usize,
}

impl LayerPlan {
    pub fn new(t: &MlpTopology) -> Self {
        let mut offset = 0usize;
        let mut in_dim = t.input_dim;
        let mut trunk = Vec::with_capacity(t.trunk_layers.len());
        for &w in &t.trunk_layers {
            let spec = LinearSpec { in_dim, out_dim: w, w: offset, b: offset + in_dim * w };
            offset += in_dim * w + w;
            in_dim = w;
            trunk.push(spec);
        }
        let trunk_len = offset;
        let mut head = Vec::with_capacity(t.head_layers.len());
        for &w in &t.head_layers {
            let linear = LinearSpec { in_dim, out_dim: w, w: offset, b: offset + in_dim * w };
            offset += in_dim * w + w;
            let ln_gain = offset;
            let ln_bias = offset + w;
            offset += 2 * w;
            in_dim = w;
            head.push(HeadLayerSpec { linear, ln_gain, ln_bias });
        }
        let output = LinearSpec {
            in_dim,
            out_dim: t.output_dim,
            w: offset,
            b: offset + in_dim * t.output_dim,
        };
        offset += in_dim * t.output_dim + t.output_dim;
        LayerPlan { trunk, head, output, trunk_len, total_len: offset }
    }
}

/// Flat parameter vector tied to its topology, with trunk/head index spans.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    topology: MlpTopology,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, topology: MlpTopology) -> Result<Self> {
        topology.validate()?;
        let expect = topology.param_count();
        if values.len() != expect {
            return Err(Error::config(format!(
                "param vector length {} != topology count {expect}",
                values.len()
            )));
        }
        Ok(ParamVector { values, topology })
    }

    pub fn zeros(topology: MlpTopology) -> Self {
        let n = topology.param_count();
        ParamVector { values: vec![0.0; n], topology }
    }

    /// Xavier-uniform weights, zero biases, unit standardization gains.
    pub fn random_init(topology: MlpTopology, rng: &mut RngStream) -> Self {
        let plan = LayerPlan::new(&topology);
        let mut values = vec![0.0; plan.total_len];
        let init_linear = |spec: &LinearSpec, values: &mut [f64], rng: &mut RngStream| {
            let limit = (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt();
            for i in 0..spec.in_dim * spec.out_dim {
                values[spec.w + i] = (rng.uniform() * 2.0 - 1.0) * limit;
            }
        };
        for spec in &plan.trunk {
            init_linear(spec, &mut values, rng);
        }
        for h in &plan.head {
            init_linear(&h.linear, &mut values, rng);
            for i in 0..h.linear.out_dim {
                values[h.ln_gain + i] = 1.0;
            }
        }
        init_linear(&plan.output, &mut values, rng);
        ParamVector { values, topology }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn trunk_span(&self) -> Range<usize> {
        0..self.topology.trunk_param_count()
    }

    pub fn head_span(&self) -> Range<usize> {
        self.topology.trunk_param_count()..self.values.len()
    }

    /// Order-sensitive digest of the exact parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}
