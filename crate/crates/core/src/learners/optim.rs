//! Adam and the triangular cyclic learning-rate schedule.

use serde::{Deserialize, Serialize};

/// Linear cyclic schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CyclicLr {
    pub lr_min: f64,
    pub lr_max: f64,
    /// Half period in epochs.
    pub half_cycle: usize,
}

impl Default for CyclicLr {
    fn default() -> Self {
        Self {
            lr_min: 5e-5,
            lr_max: 5e-4,
            half_cycle: 2,
        }
    }
}

/// Triangular wave: `lr_min` at step 0, `lr_max` after
/// `half_cycle · steps_per_epoch` steps, back to `lr_min` after twice that.
pub fn cyclic_lr(step: usize, steps_per_epoch: usize, cfg: &CyclicLr) -> f64 {
    assert!(steps_per_epoch >= 1 && cfg.half_cycle >= 1);
    let half = cfg.half_cycle * steps_per_epoch;
    let pos = step % (2 * half);
    let up = if pos <= half { pos } else { 2 * half - pos };
    let frac = up as f64 / half as f64;
    // written as a convex combination so both endpoints are exact
    cfg.lr_min * (1.0 - frac) + cfg.lr_max * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}
