//! SGD with heavy-ball momentum, L2 weight decay, and a step schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which the learning rate is divided by `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_epochs: vec![15, 20, 25],
            decay_factor: 10.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Validation(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Validation(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::Validation(format!(
                "decay factor must be positive, got {}",
                self.decay_factor
            )));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "decay epochs {:?} must be strictly increasing",
                self.decay_epochs
            )));
        }
        Ok(())
    }

    /// Initial rate divided by `decay_factor` once per decay epoch reached.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let passed = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.learning_rate / self.decay_factor.powi(passed as i32)
    }
}

/// One in-place update:
/// `v ← momentum·v + grad + weight_decay·param`, `param ← param − lr·v`.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Dimension(format!(
            "params {}, grads {}, velocity {}",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient entry {i} is {}",
            grads[i]
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// A parameter buffer handed to the optimizer together with its gradient.
pub struct ParamSlot<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
    /// Whether weight decay applies (false for biases).
    pub decay: bool,
}

/// Optimizer state: one velocity buffer per parameter slot, matched by position.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn step(&mut self, slots: Vec<ParamSlot<'_>>, lr: f64) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
        }
        if self.velocity.len() != slots.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {}",
                self.velocity.len(),
                slots.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(&mut self.velocity) {
            let wd = if slot.decay {
                self.config.weight_decay
            } else {
                0.0
            };
            sgd_step(slot.value, slot.grad, v, lr, self.config.momentum, wd)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_scales_velocity_only() {
        let mut p = [1.5];
        let mut v = [2.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        // v' = 1.8, p' = 1.5 - 0.18
        assert_eq!(v[0], 0.9 * 2.0);
        assert_eq!(p[0], 1.5 - 0.1 * (0.9 * 2.0));

        let mut p = [1.5];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p[0], 1.5);
    }

    #[test]
    fn one_plain_step() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.5], &mut v, 0.1, 0.0, 0.0).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn decay_only_step() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.1, 0.0, 1e-4).unwrap();
        assert!((p[0] - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = [1.0, -2.0, 3.5];
        let mut v = [0.3, 0.0, -1.0];
        sgd_step(&mut p, &[0.1, 5.0, -2.0], &mut v, 0.0, 0.9, 1e-4).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.5]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = [1.0];
        let mut v = [0.0];
        let err = sgd_step(&mut p, &[f64::NAN], &mut v, 0.1, 0.9, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p[0], 1.0);
    }

    #[test]
    fn step_schedule() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            ..SgdConfig::default()
        };
        assert_eq!(cfg.lr_at_epoch(0), 0.1);
        assert_eq!(cfg.lr_at_epoch(14), 0.1);
        assert!((cfg.lr_at_epoch(20) - 0.001).abs() < 1e-15);
        assert!((cfg.lr_at_epoch(29) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let repeated = SgdConfig {
            decay_epochs: vec![5, 5],
            ..SgdConfig::default()
        };
        assert!(repeated.validate().is_err());
        let runaway = SgdConfig {
            momentum: 1.0,
            ..SgdConfig::default()
        };
        assert!(runaway.validate().is_err());
    }
}
