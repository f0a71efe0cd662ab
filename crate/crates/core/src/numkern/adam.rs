use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// The optimizer's published default moments and epsilon with the given learning rate.
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(len: usize) -> Self {
        AdamMoments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update of `param` at step `t` (1-based).
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamMoments, cfg: &AdamConfig, t: u64) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
    }
}

/// Adam over a fixed list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<AdamMoments>,
}

impl Adam {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Adam {
            config,
            step: 0,
            moments: sizes.iter().map(|&n| AdamMoments::zeros(n)).collect(),
        }
    }

    /// Restores a saved optimizer state.
    pub fn from_state(config: AdamConfig, step: u64, moments: Vec<AdamMoments>) -> Self {
        Adam {
            config,
            step,
            moments,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &[AdamMoments] {
        &self.moments
    }

    /// Applies one update. Fails without touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let t = self.step + 1;
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::dims("adam", &[self.moments.len()], &[params.len(), grads.len()]));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::dims("adam", &[p.len()], &[g.len()]));
            }
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Training { step: t as usize });
        }
        for ((p, g), st) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            adam_step(p, g, st, &self.config, t);
        }
        self.step = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[3]);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..5 {
            adam.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the first step is lr·g/(|g|+eps).
        let lr = 1e-3;
        let mut adam = Adam::new(AdamConfig::with_lr(lr), &[1]);
        let mut p = vec![0.5];
        adam.step(&mut [&mut p], &[&[1.0]]).unwrap();
        let expected = 0.5 - lr * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &[1]);
        let mut p = vec![0.0];
        adam.step(&mut [&mut p], &[&[1.0]]).unwrap();
        let before = p.clone();
        let err = adam.step(&mut [&mut p], &[&[f64::NAN]]).unwrap_err();
        assert_eq!(err, Error::Training { step: 2 });
        assert_eq!(p, before);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut adam = Adam::new(AdamConfig::with_lr(0.01), &[4]);
            let mut p = vec![0.1, 0.2, 0.3, 0.4];
            for t in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| libm::sin(x * t as f64) + 0.3).collect();
                adam.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
