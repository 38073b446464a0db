//! Conditional noise predictor: an MLP over the concatenation of the noisy
//! vector, a sinusoidal timestep embedding and a learnable class embedding.
//! A dedicated null-class row supports conditioning dropout and the
//! unconditional branch of guided prediction.

use crate::core::RngStream;
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Mat, MlpTopology, Mode};

/// Condition of one training or sampling row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Class(usize),
    Null,
}

#[derive(Debug, Clone)]
pub struct DenoiserModel {
    /// Flat parameters: MLP weights first, then (C+1)·class_embed_dim
    /// embedding rows (row C is the null class).
    params: Vec<f64>,
    topology: MlpTopology,
    data_dim: usize,
    class_count: usize,
    class_embed_dim: usize,
    time_embed_dim: usize,
    total_steps: usize,
}

impl DenoiserModel {
    pub fn init(
        data_dim: usize,
        class_count: usize,
        hidden_layers: &[usize],
        time_embed_dim: usize,
        class_embed_dim: usize,
        total_steps: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if time_embed_dim % 2 != 0 || time_embed_dim == 0 {
            return Err(Error::config("time embedding dim must be even and > 0"));
        }
        if class_embed_dim == 0 || class_count == 0 {
            return Err(Error::config("class embedding needs positive dims"));
        }
        let topology = MlpTopology {
            input_dim: data_dim + time_embed_dim + class_embed_dim,
            trunk_layers: hidden_layers.to_vec(),
            head_layers: vec![],
            output_dim: data_dim,
            activation: Activation::Tanh,
            dropout_prob: 0.0,
        };
        topology.validate()?;
        let net = crate::nn::ParamVector::random_init(topology.clone(), &mut rng.derive("net"));
        let mut params = net.values().to_vec();
        let mut emb_rng = rng.derive("embeddings");
        params.extend((0..(class_count + 1) * class_embed_dim).map(|_| 0.1 * emb_rng.normal()));
        Ok(DenoiserModel {
            params,
            topology,
            data_dim,
            class_count,
            class_embed_dim,
            time_embed_dim,
            total_steps,
        })
    }

    /// Rebuild a model from exported parts (checkpoint loading).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        params: Vec<f64>,
        data_dim: usize,
        class_count: usize,
        hidden_layers: &[usize],
        time_embed_dim: usize,
        class_embed_dim: usize,
        total_steps: usize,
    ) -> Result<Self> {
        let topology = MlpTopology {
            input_dim: data_dim + time_embed_dim + class_embed_dim,
            trunk_layers: hidden_layers.to_vec(),
            head_layers: vec![],
            output_dim: data_dim,
            activation: Activation::Tanh,
            dropout_prob: 0.0,
        };
        topology.validate()?;
        let expect = topology.param_count() + (class_count + 1) * class_embed_dim;
        if params.len() != expect {
            return Err(Error::parse(format!(
                "denoiser parameter count {} != expected {expect}",
                params.len()
            )));
        }
        Ok(DenoiserModel {
            params,
            topology,
            data_dim,
            class_count,
            class_embed_dim,
            time_embed_dim,
            total_steps,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn class_embed_dim(&self) -> usize {
        self.class_embed_dim
    }

    pub fn time_embed_dim(&self) -> usize {
        self.time_embed_dim
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }

    fn net_len(&self) -> usize {
        self.topology.param_count()
    }

    fn embedding(&self, cond: Conditioning) -> &[f64] {
        let row = match cond {
            Conditioning::Class(c) => {
                assert!(c < self.class_count, "class {c} out of range");
                c
            }
            Conditioning::Null => self.class_count,
        };
        let start = self.net_len() + row * self.class_embed_dim;
        &self.params[start..start + self.class_embed_dim]
    }

    /// Sinusoidal embedding of a timestep: interleaved sin/cos over
    /// geometrically spaced frequencies.
    pub fn time_embedding(&self, t: usize) -> Vec<f64> {
        let half = self.time_embed_dim / 2;
        let mut out = Vec::with_capacity(self.time_embed_dim);
        for k in 0..half {
            let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
            let angle = t as f64 * freq;
            out.push(angle.sin());
            out.push(angle.cos());
        }
        out
    }

    /// Assemble one input row [x_t | time | class].
    fn input_row(&self, x_t: &[f64], t: usize, cond: Conditioning) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.topology.input_dim);
        row.extend_from_slice(x_t);
        row.extend(self.time_embedding(t));
        row.extend_from_slice(self.embedding(cond));
        row
    }

    /// Predicted noise for a batch sharing one (t, conditioning).
    pub fn predict(&self, x_t: &Mat, t: usize, cond: Conditioning) -> Mat {
        let rows: Vec<Vec<f64>> = (0..x_t.rows())
            .map(|r| self.input_row(x_t.row(r), t, cond))
            .collect();
        let inputs = Mat::from_rows(&rows);
        let mut rng = RngStream::from_seed(0); // eval mode draws nothing
        let pass = nn::forward_raw(&self.topology, &self.params, &inputs, Mode::Eval, &mut rng)
            .expect("denoiser shapes are consistent by construction");
        pass.logits().clone()
    }

    /// MSE+L1 diffusion loss on a prepared batch.
    pub fn loss(
        &self,
        x_t: &Mat,
        ts: &[usize],
        conds: &[Conditioning],
        target_eps: &Mat,
    ) -> f64 {
        let (loss, _, _) = self.forward_loss(x_t, ts, conds, target_eps);
        loss
    }

    fn forward_loss(
        &self,
        x_t: &Mat,
        ts: &[usize],
        conds: &[Conditioning],
        target_eps: &Mat,
    ) -> (f64, nn::ForwardPass, Mat) {
        assert_eq!(x_t.rows(), ts.len());
        assert_eq!(x_t.rows(), conds.len());
        let rows: Vec<Vec<f64>> = (0..x_t.rows())
            .map(|r| self.input_row(x_t.row(r), ts[r], conds[r]))
            .collect();
        let inputs = Mat::from_rows(&rows);
        let mut rng = RngStream::from_seed(0);
        let pass = nn::forward_raw(&self.topology, &self.params, &inputs, Mode::Eval, &mut rng)
            .expect("denoiser shapes are consistent by construction");
        let (loss, grad_pred) = nn::mse_plus_l1(pass.logits(), target_eps);
        (loss, pass, grad_pred)
    }

    /// Diffusion loss and its gradient over the full flat parameter vector
    /// (network weights and class embeddings).
    pub fn loss_and_gradient(
        &self,
        x_t: &Mat,
        ts: &[usize],
        conds: &[Conditioning],
        target_eps: &Mat,
    ) -> (f64, Vec<f64>) {
        let (loss, pass, grad_pred) = self.forward_loss(x_t, ts, conds, target_eps);
        let (net_grad, grad_inputs) =
            nn::backward_raw(&self.topology, &self.params, &pass, &grad_pred, None);
        let mut grad = vec![0.0; self.params.len()];
        grad[..net_grad.len()].copy_from_slice(&net_grad);
        let emb_base = self.net_len();
        let emb_offset = self.data_dim + self.time_embed_dim;
        for (r, cond) in conds.iter().enumerate() {
            let row = match cond {
                Conditioning::Class(c) => *c,
                Conditioning::Null => self.class_count,
            };
            let dst = emb_base + row * self.class_embed_dim;
            let src = grad_inputs.row(r);
            for k in 0..self.class_embed_dim {
                grad[dst + k] += src[emb_offset + k];
            }
        }
        (loss, grad)
    }
}
