//! Optimizers with per-group learning rates, global-norm gradient clipping,
//! decoupled weight decay, and a reduce-on-plateau schedule.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

/// One parameter span updated with its own learning rate.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub range: Range<usize>,
    pub lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
// Margin keeps clipping idempotent: a vector already scaled to the cap will
// not be rescaled by ulp-level excess.
const CLIP_MARGIN: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    groups: Vec<ParamGroup>,
    weight_decay: f64,
    grad_clip: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(
        kind: OptimizerKind,
        groups: Vec<ParamGroup>,
        weight_decay: f64,
        grad_clip: Option<f64>,
        param_len: usize,
    ) -> Self {
        assert!(groups.iter().all(|g| g.lr >= 0.0), "negative lr");
        assert!(groups.iter().all(|g| g.range.end <= param_len), "group out of range");
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::AdamW => param_len,
        };
        OptimizerState {
            kind,
            groups,
            weight_decay,
            grad_clip,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        }
    }

    /// Single group over the whole vector.
    pub fn single(kind: OptimizerKind, lr: f64, weight_decay: f64, grad_clip: Option<f64>, param_len: usize) -> Self {
        Self::new(kind, vec![ParamGroup { range: 0..param_len, lr }], weight_decay, grad_clip, param_len)
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.lr).collect()
    }

    pub fn scale_learning_rates(&mut self, factor: f64) {
        for g in &mut self.groups {
            g.lr *= factor;
        }
    }

    /// Rescale `grad` in place when its global L2 norm exceeds the cap.
    pub fn clip_gradient(cap: f64, grad: &mut [f64]) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > cap * CLIP_MARGIN {
            let scale = cap / norm;
            for g in grad.iter_mut() {
                *g *= scale;
            }
        }
    }

    /// Apply one update. `grad` is consumed so clipping can work in place.
    pub fn step(&mut self, params: &mut [f64], mut grad: Vec<f64>) {
        assert_eq!(params.len(), grad.len(), "grad/param length mismatch");
        if let Some(cap) = self.grad_clip {
            Self::clip_gradient(cap, &mut grad);
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for group in &self.groups {
                    for i in group.range.clone() {
                        if self.weight_decay > 0.0 {
                            params[i] *= 1.0 - group.lr * self.weight_decay;
                        }
                        params[i] -= group.lr * grad[i];
                    }
                }
            }
            OptimizerKind::AdamW => {
                let bc1 = 1.0 - BETA1.powi(self.step as i32);
                let bc2 = 1.0 - BETA2.powi(self.step as i32);
                for group in &self.groups {
                    for i in group.range.clone() {
                        if self.weight_decay > 0.0 {
                            params[i] *= 1.0 - group.lr * self.weight_decay;
                        }
                        self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
                        self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                        let m_hat = self.m[i] / bc1;
                        let v_hat = self.v[i] / bc2;
                        params[i] -= group.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// Reduce-on-plateau: when the monitored loss fails to improve by more than
/// `min_delta` for `patience` consecutive observations, signal a reduction.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, min_delta: f64) -> Self {
        PlateauSchedule { factor, patience, min_delta, best: None, bad_epochs: 0 }
    }

    /// Canonical settings: factor 0.5, patience 3, min_delta 1e-4.
    pub fn default_schedule() -> Self {
        Self::new(0.5, 3, 1e-4)
    }

    /// Observe one validation loss; returns true when learning rates should
    /// be multiplied by `factor` this epoch. Improvement must strictly exceed
    /// `min_delta`.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        match self.best {
            None => {
                self.best = Some(val_loss);
                false
            }
            Some(best) if best - val_loss > self.min_delta => {
                self.best = Some(val_loss);
                self.bad_epochs = 0;
                false
            }
            Some(_) => {
                self.bad_epochs += 1;
                if self.bad_epochs >= self.patience {
                    self.bad_epochs = 0;
                    true
                } else {
                    false
                }
            }
        }
    }
}
