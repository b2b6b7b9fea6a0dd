//! Adam with decoupled weight decay and a reduce-on-plateau scheduler.

use crate::error::{Error, Result};
use crate::net::{DenseNet, Gradients};

/// Adam state: first/second moment accumulators laid out in the same flat
/// order the network exposes its parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> AdamState {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Rebuild a state from checkpointed parts.
    pub fn from_parts(
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
        lr: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<AdamState> {
        if m.len() != v.len() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: v.len(),
            });
        }
        Ok(AdamState {
            m,
            v,
            step,
            lr,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        })
    }

    /// One optimizer step over a whole network. Weight decay is decoupled:
    /// `p *= 1 - lr * wd` before the adaptive update, so it never enters the
    /// moment accumulators.
    pub fn step_net(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        if net.param_count() != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "optimizer sized for {} parameters, net has {}",
                self.m.len(),
                net.param_count()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut offset = 0;
        let grad_blocks = grads.blocks();
        let param_blocks = net.param_blocks_mut();
        if grad_blocks.len() != param_blocks.len() {
            return Err(Error::LengthMismatch {
                left: grad_blocks.len(),
                right: param_blocks.len(),
            });
        }
        for (params, grads) in param_blocks.into_iter().zip(grad_blocks) {
            if params.len() != grads.len() {
                return Err(Error::LengthMismatch {
                    left: params.len(),
                    right: grads.len(),
                });
            }
            self.update_block(offset, bc1, bc2, params, grads);
            offset += params.len();
        }
        if offset != self.m.len() {
            return Err(Error::DimensionMismatch(format!(
                "walked {offset} parameters, optimizer holds {}",
                self.m.len()
            )));
        }
        Ok(())
    }

    /// One step over a flat parameter vector (used for the two learnable
    /// log-variances of uncertainty weighting). The state must have been
    /// created with exactly this parameter count.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                left: params.len().max(grads.len()),
                right: self.m.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        self.update_block(0, bc1, bc2, params, grads);
        Ok(())
    }

    fn update_block(&mut self, offset: usize, bc1: f64, bc2: f64, params: &mut [f64], grads: &[f64]) {
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            *p *= 1.0 - self.lr * self.weight_decay;
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Reduce-on-plateau: multiply the learning rate by `factor` after more than
/// `patience` consecutive epochs without improvement of the monitored metric
/// (lower is better). The learning rate never increases.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best_metric: f64,
    epochs_since_improvement: usize,
}

/// Improvements smaller than this are treated as a plateau.
const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> PlateauScheduler {
        PlateauScheduler {
            factor,
            patience,
            min_lr: 0.0,
            best_metric: f64::INFINITY,
            epochs_since_improvement: 0,
        }
    }

    pub fn best_metric(&self) -> f64 {
        self.best_metric
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub fn from_parts(
        factor: f64,
        patience: usize,
        min_lr: f64,
        best_metric: f64,
        epochs_since_improvement: usize,
    ) -> PlateauScheduler {
        PlateauScheduler {
            factor,
            patience,
            min_lr,
            best_metric,
            epochs_since_improvement,
        }
    }

    /// Feed one epoch's validation metric; returns the learning rate to use
    /// from the next step on.
    pub fn step(&mut self, validation_metric: f64, current_lr: f64) -> f64 {
        if validation_metric < self.best_metric - IMPROVEMENT_TOLERANCE {
            self.best_metric = validation_metric;
            self.epochs_since_improvement = 0;
            return current_lr;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement > self.patience {
            self.epochs_since_improvement = 0;
            return (current_lr * self.factor).max(self.min_lr);
        }
        current_lr
    }
}
