use serde::{Deserialize, Serialize};

use super::tensor::Tensor2D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Adam with bias correction. Moments are allocated on the first step and
/// must keep the same shapes afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using each tensor's gradient slot (a missing slot is a
    /// zero gradient). Gradients are left in place; clearing them is the caller's job.
    ///
    /// Every gradient is validated before any parameter changes, so a
    /// non-finite gradient leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor2D]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data().len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape {
                context: "Adam parameter count",
                expected: (self.m.len(), 1),
                actual: (params.len(), 1),
            });
        }
        for (i, p) in params.iter().enumerate() {
            if p.data().len() != self.m[i].len() {
                return Err(Error::Shape {
                    context: "Adam moment shape",
                    expected: (self.m[i].len(), 1),
                    actual: (p.data().len(), 1),
                });
            }
            if let Some(g) = p.grad() {
                if let Some(index) = g.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "Adam gradient",
                        param: i,
                        index,
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(grad) = p.grad().map(<[f64]>::to_vec) else {
                // Zero gradient: decay the moments, step with what is left.
                for (m, v) in self.m[i].iter_mut().zip(self.v[i].iter_mut()) {
                    *m *= beta1;
                    *v *= beta2;
                }
                let (m, v) = (&self.m[i], &self.v[i]);
                for ((x, &m), &v) in p.data_mut().iter_mut().zip(m).zip(v) {
                    *x -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                }
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((x, &g), m), v) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(params: &mut [&mut Tensor2D], max_norm: f64) -> f64 {
    let sq: f64 = params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / (norm + 1e-6);
        for p in params.iter_mut() {
            if p.grad().is_some() {
                p.grad_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
    }
    norm
}
