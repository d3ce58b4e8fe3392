use serde::{Deserialize, Serialize};

use super::mlp::MlpParameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Factor applied to `lr` per 1000 steps, continuously: the step-`n` rate
    /// is `lr * decay^(n / 1000)`. 1 keeps the rate constant.
    #[serde(default = "no_decay")]
    pub decay: f64,
}

fn no_decay() -> f64 {
    1.0
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    /// One bias-corrected Adam update of `params` in place. Rejects the whole
    /// step, leaving everything untouched, if any gradient entry is not finite.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
                context: "Adam state vs parameters/gradients",
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps, decay } = self.config;
        let lr = if decay == 1.0 { lr } else { lr * decay.powf(self.step as f64 / 1000.0) };
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::update`].
pub fn adam_step(
    state: &AdamState,
    params: &MlpParameters,
    grads: &[f64],
) -> Result<(AdamState, MlpParameters)> {
    let mut s = state.clone();
    let mut p = params.clone();
    s.update(&mut p.values, grads)?;
    Ok((s, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_advances_counter() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        s.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_by_hand() {
        let mut s = AdamState::new(1, AdamConfig::with_lr(1e-3));
        let mut p = vec![0.0];
        s.update(&mut p, &[0.5]).unwrap();
        let expected = -1e-3 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        assert!((p[0] + 9.9999998e-4).abs() < 1e-12);
    }

    #[test]
    fn unit_scale_updates() {
        let mut s = AdamState::new(1, AdamConfig::with_lr(1e-3));
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..2 {
            s.update(&mut p, &[0.3]).unwrap();
            let step = (p[0] - prev).abs();
            assert!((step - 1e-3).abs() < 1e-5);
            prev = p[0];
        }
    }

    #[test]
    fn decay_scales_the_step() {
        let config = AdamConfig {
            decay: 0.5,
            ..AdamConfig::with_lr(1e-3)
        };
        let mut s = AdamState::new(1, config);
        s.step = 1999;
        let mut p = vec![0.0];
        s.update(&mut p, &[0.3]).unwrap();
        let c1 = 1.0 - 0.9f64.powi(2000);
        let c2 = 1.0 - 0.999f64.powi(2000);
        let mhat = 0.1 * 0.3 / c1;
        let vhat = 0.001 * 0.09 / c2;
        let expected = -0.25e-3 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            s.update(&mut p, &[0.0, f64::NAN]),
            Err(Error::NonFiniteGradient { index: 1 })
        ));
        assert_eq!(s.step, 0);
        assert!(s.update(&mut p, &[1.0]).is_err());
    }
}
