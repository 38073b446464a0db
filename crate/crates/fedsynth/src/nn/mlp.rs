//! Forward and exact reverse-mode passes over the trunk/head MLP.

use super::mat::Mat;
use super::{LinearSpec, MlpTopology, ParamVector};
use crate::core::{RngStream, Sample};
use crate::error::{Error, Result};

const STD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the backward pass needs, captured during forward.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Mat,
    trunk_pre: Vec<Mat>,
    trunk_act: Vec<Mat>,
    head_norm: Vec<Mat>,      // standardized x̂
    head_inv_std: Vec<Vec<f64>>, // per sample 1/sqrt(var+eps)
    head_scaled: Vec<Mat>,    // y = gain·x̂ + shift (activation input)
    head_act: Vec<Mat>,       // activation output before dropout
    head_out: Vec<Mat>,       // layer output after dropout
    head_mask: Vec<Option<Mat>>,
    logits: Mat,
}

impl ForwardPass {
    pub fn logits(&self) -> &Mat {
        &self.logits
    }

    /// Last trunk activation (the contrastive representation).
    pub fn features(&self) -> &Mat {
        self.trunk_act.last().unwrap_or(&self.input)
    }
}

fn linear_forward(params: &[f64], spec: &LinearSpec, input: &Mat) -> Mat {
    let mut out = Mat::zeros(input.rows(), spec.out_dim);
    for r in 0..input.rows() {
        let x = input.row(r);
        let y = out.row_mut(r);
        for (o, y_o) in y.iter_mut().enumerate() {
            let w_row = &params[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            let mut acc = params[spec.b + o];
            for (w, xi) in w_row.iter().zip(x) {
                acc += w * xi;
            }
            *y_o = acc;
        }
    }
    out
}

/// Accumulate linear-layer gradients and return the gradient wrt its input.
fn linear_backward(
    params: &[f64],
    spec: &LinearSpec,
    input: &Mat,
    grad_out: &Mat,
    grad: &mut [f64],
) -> Mat {
    let mut grad_in = Mat::zeros(input.rows(), spec.in_dim);
    for r in 0..input.rows() {
        let x = input.row(r);
        let d = grad_out.row(r);
        for (o, d_o) in d.iter().enumerate() {
            grad[spec.b + o] += d_o;
            let gw = &mut grad[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += d_o * xi;
            }
        }
        let gi = grad_in.row_mut(r);
        for (o, d_o) in d.iter().enumerate() {
            let w_row = &params[spec.w + o * spec.in_dim..spec.w + (o + 1) * spec.in_dim];
            for (g, w) in gi.iter_mut().zip(w_row) {
                *g += d_o * w;
            }
        }
    }
    grad_in
}

/// Run the network on a batch of feature rows.
///
/// Eval mode is deterministic: dropout is disabled and `rng` untouched.
/// Train mode draws one inverted-dropout mask per head layer.
pub fn forward(
    params: &ParamVector,
    inputs: &Mat,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<ForwardPass> {
    forward_raw(params.topology(), params.values(), inputs, mode, rng)
}

/// Forward over a raw parameter slice laid out for `topo`.
pub(crate) fn forward_raw(
    topo: &MlpTopology,
    values: &[f64],
    inputs: &Mat,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<ForwardPass> {
    if inputs.cols() != topo.input_dim {
        return Err(Error::config(format!(
            "input dim {} != topology input {}",
            inputs.cols(),
            topo.input_dim
        )));
    }
    if inputs.rows() == 0 {
        return Err(Error::config("forward on empty batch"));
    }
    let plan = super::LayerPlan::new(topo);
    debug_assert!(values.len() >= plan.total_len);
    let act = topo.activation;

    let mut trunk_pre = Vec::with_capacity(plan.trunk.len());
    let mut trunk_act = Vec::with_capacity(plan.trunk.len());
    let mut current = inputs.clone();
    for spec in &plan.trunk {
        let z = linear_forward(values, spec, &current);
        let mut a = z.clone();
        for v in a.data_mut() {
            *v = act.apply(*v);
        }
        trunk_pre.push(z);
        trunk_act.push(a.clone());
        current = a;
    }

    let mut head_norm = Vec::new();
    let mut head_inv_std = Vec::new();
    let mut head_scaled = Vec::new();
    let mut head_act = Vec::new();
    let mut head_out = Vec::new();
    let mut head_mask = Vec::new();
    for spec in &plan.head {
        let z = linear_forward(values, &spec.linear, &current);
        let w = spec.linear.out_dim;
        let mut norm = Mat::zeros(z.rows(), w);
        let mut inv_stds = Vec::with_capacity(z.rows());
        for r in 0..z.rows() {
            let row = z.row(r);
            let mean = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let inv = 1.0 / (var + STD_EPS).sqrt();
            inv_stds.push(inv);
            for (n, v) in norm.row_mut(r).iter_mut().zip(row) {
                *n = (v - mean) * inv;
            }
        }
        let mut scaled = norm.clone();
        for r in 0..scaled.rows() {
            for (c, v) in scaled.row_mut(r).iter_mut().enumerate() {
                *v = *v * values[spec.ln_gain + c] + values[spec.ln_bias + c];
            }
        }
        let mut a = scaled.clone();
        for v in a.data_mut() {
            *v = act.apply(*v);
        }
        let (out, mask) = if mode == Mode::Train && topo.dropout_prob > 0.0 {
            let keep = 1.0 - topo.dropout_prob;
            let mut mask = Mat::zeros(a.rows(), a.cols());
            let mut out = a.clone();
            for r in 0..a.rows() {
                for c in 0..a.cols() {
                    let kept = rng.uniform() >= topo.dropout_prob;
                    *mask.at_mut(r, c) = if kept { 1.0 } else { 0.0 };
                    *out.at_mut(r, c) = if kept { a.at(r, c) / keep } else { 0.0 };
                }
            }
            (out, Some(mask))
        } else {
            (a.clone(), None)
        };
        head_norm.push(norm);
        head_inv_std.push(inv_stds);
        head_scaled.push(scaled);
        head_act.push(a);
        head_out.push(out.clone());
        head_mask.push(mask);
        current = out;
    }

    let logits = linear_forward(values, &plan.output, &current);
    Ok(ForwardPass {
        input: inputs.clone(),
        trunk_pre,
        trunk_act,
        head_norm,
        head_inv_std,
        head_scaled,
        head_act,
        head_out,
        head_mask,
        logits,
    })
}

/// Exact gradient of `sum(grad_logits ⊙ logits) + sum(grad_features ⊙ features)`
/// wrt every parameter. Also returns the gradient wrt the input rows.
pub fn backward(
    params: &ParamVector,
    pass: &ForwardPass,
    grad_logits: &Mat,
    grad_features: Option<&Mat>,
) -> (Vec<f64>, Mat) {
    backward_raw(params.topology(), params.values(), pass, grad_logits, grad_features)
}

/// Backward over a raw parameter slice laid out for `topo`.
pub(crate) fn backward_raw(
    topo: &MlpTopology,
    values: &[f64],
    pass: &ForwardPass,
    grad_logits: &Mat,
    grad_features: Option<&Mat>,
) -> (Vec<f64>, Mat) {
    let plan = super::LayerPlan::new(topo);
    let act = topo.activation;
    let mut grad = vec![0.0; plan.total_len];

    let last_head_out = pass.head_out.last();
    let output_input: &Mat = match last_head_out {
        Some(m) => m,
        None => pass.features(),
    };
    let mut d = linear_backward(values, &plan.output, output_input, grad_logits, &mut grad);

    for (i, spec) in plan.head.iter().enumerate().rev() {
        if let Some(mask) = &pass.head_mask[i] {
            let keep = 1.0 - topo.dropout_prob;
            for r in 0..d.rows() {
                for c in 0..d.cols() {
                    *d.at_mut(r, c) *= mask.at(r, c) / keep;
                }
            }
        }
        // activation
        let scaled = &pass.head_scaled[i];
        let a = &pass.head_act[i];
        for r in 0..d.rows() {
            for c in 0..d.cols() {
                *d.at_mut(r, c) *= act.derivative(scaled.at(r, c), a.at(r, c));
            }
        }
        // standardization: y = gain·x̂ + shift
        let w = spec.linear.out_dim;
        let norm = &pass.head_norm[i];
        let mut dz = Mat::zeros(d.rows(), w);
        for r in 0..d.rows() {
            let inv = pass.head_inv_std[i][r];
            let dy = d.row(r);
            let xhat = norm.row(r);
            let mut dxhat = vec![0.0; w];
            for c in 0..w {
                grad[spec.ln_gain + c] += dy[c] * xhat[c];
                grad[spec.ln_bias + c] += dy[c];
                dxhat[c] = dy[c] * values[spec.ln_gain + c];
            }
            let mean_dxhat = dxhat.iter().sum::<f64>() / w as f64;
            let mean_dxhat_xhat =
                dxhat.iter().zip(xhat).map(|(dx, xh)| dx * xh).sum::<f64>() / w as f64;
            for (c, out) in dz.row_mut(r).iter_mut().enumerate() {
                *out = inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
            }
        }
        let layer_input: &Mat = if i == 0 {
            pass.features()
        } else {
            &pass.head_out[i - 1]
        };
        d = linear_backward(values, &spec.linear, layer_input, &dz, &mut grad);
    }

    // `d` is now the gradient wrt the trunk output; contrastive or other
    // feature-space terms enter here.
    if let Some(gf) = grad_features {
        for r in 0..d.rows() {
            let drow = d.row_mut(r);
            for (dv, g) in drow.iter_mut().zip(gf.row(r)) {
                *dv += g;
            }
        }
    }

    for (i, spec) in plan.trunk.iter().enumerate().rev() {
        let z = &pass.trunk_pre[i];
        let a = &pass.trunk_act[i];
        for r in 0..d.rows() {
            for c in 0..d.cols() {
                *d.at_mut(r, c) *= act.derivative(z.at(r, c), a.at(r, c));
            }
        }
        let layer_input: &Mat = if i == 0 { &pass.input } else { &pass.trunk_act[i - 1] };
        d = linear_backward(values, spec, layer_input, &d, &mut grad);
    }

    (grad, d)
}

/// Stack sample feature vectors into a batch matrix.
pub fn features_matrix(samples: &[&Sample]) -> Mat {
    let cols = samples.first().map_or(0, |s| s.features.len());
    let mut m = Mat::zeros(samples.len(), cols);
    for (r, s) in samples.iter().enumerate() {
        m.row_mut(r).copy_from_slice(&s.features);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpTopology};

    fn tiny_topology() -> MlpTopology {
        MlpTopology {
            input_dim: 3,
            trunk_layers: vec![],
            head_layers: vec![],
            output_dim: 2,
            activation: Activation::Relu,
            dropout_prob: 0.0,
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let params = ParamVector::zeros(MlpTopology::classifier_default(4, 3));
        let mut rng = RngStream::from_seed(1);
        let x = Mat::from_rows(&[vec![1.0, -2.0, 0.5, 3.0]]);
        let pass = forward(&params, &x, Mode::Eval, &mut rng).unwrap();
        assert!(pass.logits().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_hand_multiply() {
        // W = [[1,2,3],[4,5,6]], b = [0.5, -1]
        let topo = tiny_topology();
        let params =
            ParamVector::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -1.0], topo).unwrap();
        let mut rng = RngStream::from_seed(1);
        let x = Mat::from_rows(&[vec![1.0, 0.0, -1.0]]);
        let pass = forward(&params, &x, Mode::Eval, &mut rng).unwrap();
        // Wx+b = [1-3+0.5, 4-6-1] = [-1.5, -3]
        assert_eq!(pass.logits().row(0), &[-1.5, -3.0]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let topo = MlpTopology::classifier_default(6, 4);
        let mut rng = RngStream::from_seed(9).derive("p");
        let params = ParamVector::random_init(topo, &mut rng);
        let x = Mat::from_rows(&[vec![0.3; 6], vec![-0.7; 6]]);
        let mut r1 = RngStream::from_seed(1);
        let mut r2 = RngStream::from_seed(2);
        let a = forward(&params, &x, Mode::Eval, &mut r1).unwrap();
        let b = forward(&params, &x, Mode::Eval, &mut r2).unwrap();
        assert_eq!(a.logits().data(), b.logits().data());
    }

    #[test]
    fn train_mode_dropout_scales_by_keep_probability() {
        let topo = MlpTopology {
            input_dim: 2,
            trunk_layers: vec![4],
            head_layers: vec![512],
            output_dim: 2,
            activation: Activation::Tanh,
            dropout_prob: 0.3,
        };
        let mut rng = RngStream::from_seed(12).derive("p");
        let params = ParamVector::random_init(topo, &mut rng);
        let x = Mat::from_rows(&[vec![0.5, -0.5]]);
        let mut dr = RngStream::from_seed(77).derive("drop");
        let pass = forward(&params, &x, Mode::Train, &mut dr).unwrap();
        let mask = pass.head_mask[0].as_ref().unwrap();
        let kept = mask.data().iter().filter(|&&m| m == 1.0).count();
        let rate = kept as f64 / mask.data().len() as f64;
        assert!((rate - 0.7).abs() < 0.08, "keep rate {rate}");
        // dropped activations are exactly zero, kept ones scaled by 1/0.7
        for c in 0..512 {
            let out = pass.head_out[0].at(0, c);
            let a = pass.head_act[0].at(0, c);
            if mask.at(0, c) == 0.0 {
                assert_eq!(out, 0.0);
            } else {
                assert!((out - a / 0.7).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ce_bias_gradient_is_mean_softmax_minus_onehot() {
        // zero-initialized single linear layer: logits = b, so the bias
        // gradient of cross-entropy is the batch mean of softmax − onehot
        let topo = MlpTopology {
            input_dim: 3,
            trunk_layers: vec![],
            head_layers: vec![],
            output_dim: 4,
            activation: Activation::Relu,
            dropout_prob: 0.0,
        };
        let params = ParamVector::zeros(topo);
        let mut rng = RngStream::from_seed(1);
        let x = Mat::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.0, -0.5]]);
        let labels = [0usize, 2];
        let pass = forward(&params, &x, Mode::Eval, &mut rng).unwrap();
        let (_, grad_logits) = crate::nn::cross_entropy(pass.logits(), &labels);
        let (grad, _) = backward(&params, &pass, &grad_logits, None);
        let bias_offset = 3 * 4; // after the weight block
        for c in 0..4 {
            let onehot_mean =
                labels.iter().filter(|&&l| l == c).count() as f64 / labels.len() as f64;
            let expect = 0.25 - onehot_mean; // uniform softmax at zero logits
            assert!(
                (grad[bias_offset + c] - expect).abs() < 1e-15,
                "bias {c}: {} vs {expect}",
                grad[bias_offset + c]
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let params = ParamVector::zeros(MlpTopology::classifier_default(4, 3));
        let mut rng = RngStream::from_seed(1);
        let x = Mat::from_rows(&[vec![1.0, 2.0]]);
        assert!(forward(&params, &x, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let topo = MlpTopology {
            input_dim: 3,
            trunk_layers: vec![5],
            head_layers: vec![4],
            output_dim: 3,
            activation: Activation::Relu,
            dropout_prob: 0.0,
        };
        let mut prng = RngStream::from_seed(41).derive("p");
        let params = ParamVector::random_init(topo, &mut prng);
        let x = Mat::from_rows(&[vec![0.9, -0.4, 0.7], vec![-0.6, 0.8, -0.2]]);
        let labels = [1usize, 0];
        let mut rng = RngStream::from_seed(1);
        let pass = forward(&params, &x, Mode::Eval, &mut rng).unwrap();
        // the step must not flip any rectifier: check the margin first
        let margin = pass
            .trunk_pre
            .iter()
            .chain(pass.head_scaled.iter())
            .flat_map(|m| m.data())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min);
        assert!(margin > 1e-3, "instance too close to a rectifier kink: {margin}");
        let (_, grad_logits) = crate::nn::cross_entropy(pass.logits(), &labels);
        let (grad, _) = backward(&params, &pass, &grad_logits, None);
        let h = 1e-5;
        let mut p = params.clone();
        for i in 0..p.len() {
            let orig = p.values()[i];
            let mut loss_at = |v: f64, p: &mut ParamVector| {
                p.values_mut()[i] = v;
                let mut r = RngStream::from_seed(1);
                let pass = forward(p, &x, Mode::Eval, &mut r).unwrap();
                crate::nn::cross_entropy(pass.logits(), &labels).0
            };
            let lp = loss_at(orig + h, &mut p);
            let lm = loss_at(orig - h, &mut p);
            p.values_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} vs analytic {}", grad[i]);
        }
    }

    #[test]
    fn features_are_last_trunk_activation() {
        let topo = MlpTopology {
            input_dim: 2,
            trunk_layers: vec![3],
            head_layers: vec![],
            output_dim: 2,
            activation: Activation::Relu,
            dropout_prob: 0.0,
        };
        let mut rng = RngStream::from_seed(3).derive("p");
        let params = ParamVector::random_init(topo, &mut rng);
        let x = Mat::from_rows(&[vec![1.0, 1.0]]);
        let pass = forward(&params, &x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(pass.features().cols(), 3);
        assert_eq!(pass.features().data(), pass.trunk_act[0].data());
    }
}
