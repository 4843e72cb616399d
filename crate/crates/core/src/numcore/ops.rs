//! Softmax, cross-entropy gradients, and SGD with momentum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// SGD hyperparameters with a step-decay learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdHyper {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl SgdHyper {
    pub fn new(
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
        decay_factor: f64,
        decay_every: usize,
    ) -> Result<Self> {
        let h = Self {
            learning_rate,
            momentum,
            weight_decay,
            decay_factor,
            decay_every,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(self.decay_factor > 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must exceed 1, got {}",
                self.decay_factor
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Copy with the base learning rate replaced (used per epoch by the
    /// training loops together with [`lr_at_epoch`]).
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::NumericInput("softmax of empty vector".into()));
    }
    if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!(
            "softmax input has non-finite entry at index {pos}"
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let mut sum = 0.0;
    for &v in &out {
        sum += v;
    }
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Cross-entropy loss and its gradient with respect to the logits.
///
/// Returns `(-ln softmax(logits)[label], softmax(logits) - one_hot(label))`.
/// The loss is evaluated through log-sum-exp rather than `ln` of the
/// normalized probability, so it stays accurate when the true-class
/// probability underflows.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Index(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let probs = softmax(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &l in logits {
        sum += (l - max).exp();
    }
    let loss = sum.ln() + max - logits[label];
    let mut grad = probs;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// One SGD step with classic momentum and L2-in-gradient weight decay:
/// `v <- momentum * v + (grad + weight_decay * param)`,
/// `param <- param - learning_rate * v`.
pub fn sgd_step(
    params: &mut Matrix,
    grads: &Matrix,
    velocity: &mut Matrix,
    hyper: &SgdHyper,
) -> Result<()> {
    let same = |m: &Matrix| m.rows() == params.rows() && m.cols() == params.cols();
    if !same(grads) || !same(velocity) {
        return Err(Error::Shape(format!(
            "sgd_step shapes differ: params {}x{}, grads {}x{}, velocity {}x{}",
            params.rows(),
            params.cols(),
            grads.rows(),
            grads.cols(),
            velocity.rows(),
            velocity.cols()
        )));
    }
    let ps = params.as_mut_slice().iter_mut();
    let vs = velocity.as_mut_slice().iter_mut();
    for ((p, v), &g) in ps.zip(vs).zip(grads.as_slice()) {
        *v = hyper.momentum * *v + (g + hyper.weight_decay * *p);
        *p -= hyper.learning_rate * *v;
    }
    Ok(())
}

/// Learning rate at `epoch` (0-based) under step decay:
/// `base / decay_factor^floor(epoch / decay_every)`.
pub fn lr_at_epoch(hyper: &SgdHyper, epoch: usize) -> f64 {
    let steps = (epoch / hyper.decay_every) as i32;
    hyper.learning_rate / hyper.decay_factor.powi(steps)
}
