use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// Probability floor applied inside the log of the second KL argument.
pub const KL_PROB_FLOOR: f64 = 1e-10;

/// Batch of categorical distributions parameterized by logits (one row per sample).
#[derive(Debug, Clone)]
pub struct Categorical {
    logits: Tensor2D,
    log_probs: Tensor2D,
}

impl Categorical {
    pub fn from_logits(logits: Tensor2D) -> Self {
        let mut log_probs = logits.detached();
        for r in 0..log_probs.rows() {
            let row = log_probs.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|z| *z -= lse);
        }
        Self { logits, log_probs }
    }

    pub fn logits(&self) -> &Tensor2D {
        &self.logits
    }

    pub fn log_probs(&self) -> &Tensor2D {
        &self.log_probs
    }

    pub fn batch(&self) -> usize {
        self.logits.rows()
    }

    pub fn num_actions(&self) -> usize {
        self.logits.cols()
    }

    pub fn probs(&self) -> Tensor2D {
        self.log_probs.map(f64::exp)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.batch())
            .map(|r| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let row = self.log_probs.row(r);
                for (a, lp) in row.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return a;
                    }
                }
                row.len() - 1
            })
            .collect()
    }

    /// Most probable action per row (lowest index on ties).
    pub fn mode(&self) -> Vec<usize> {
        (0..self.batch())
            .map(|r| {
                let row = self.log_probs.row(r);
                let mut best = 0;
                for (a, &lp) in row.iter().enumerate() {
                    if lp > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect()
    }

    pub fn log_prob(&self, actions: &[usize]) -> Result<Vec<f64>> {
        self.check_actions(actions)?;
        Ok(actions
            .iter()
            .enumerate()
            .map(|(r, &a)| self.log_probs.get(r, a))
            .collect())
    }

    /// `∂/∂logits` of `Σᵣ upstream[r] · log p(actions[r])`.
    pub fn log_prob_grad(&self, actions: &[usize], upstream: &[f64]) -> Result<Tensor2D> {
        self.check_actions(actions)?;
        let mut g = self.probs();
        for r in 0..g.rows() {
            let u = upstream[r];
            let row = g.row_mut(r);
            row.iter_mut().for_each(|p| *p *= -u);
            row[actions[r]] += u;
        }
        Ok(g)
    }

    pub fn entropy(&self) -> Vec<f64> {
        (0..self.batch())
            .map(|r| -self.log_probs.row(r).iter().map(|&lp| lp.exp() * lp).sum::<f64>())
            .collect()
    }

    /// `∂/∂logits` of `Σᵣ upstream[r] · H(row r)`; `∂H/∂zⱼ = −pⱼ (log pⱼ + H)`.
    pub fn entropy_grad(&self, upstream: &[f64]) -> Tensor2D {
        let h = self.entropy();
        let mut g = Tensor2D::zeros(self.batch(), self.num_actions());
        for r in 0..self.batch() {
            let lp = self.log_probs.row(r);
            for (gj, &l) in g.row_mut(r).iter_mut().zip(lp) {
                *gj = -upstream[r] * l.exp() * (l + h[r]);
            }
        }
        g
    }

    /// `KL(self ‖ other)` per row, with `other`'s probabilities floored at
    /// [`KL_PROB_FLOOR`] inside the log.
    pub fn kl(&self, other: &Categorical) -> Result<Vec<f64>> {
        self.check_pair(other)?;
        Ok((0..self.batch())
            .map(|r| {
                let p = self.log_probs.row(r);
                let q = other.log_probs.row(r);
                let kl: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(&lp, &lq)| {
                        let w = lp.exp();
                        if w == 0.0 {
                            0.0
                        } else {
                            w * (lp - lq.max(KL_PROB_FLOOR.ln()))
                        }
                    })
                    .sum();
                kl.max(0.0)
            })
            .collect())
    }

    /// Gradients of `Σᵣ upstream[r] · KL(self_r ‖ other_r)` w.r.t. both logit sets.
    pub fn kl_grads(&self, other: &Categorical, upstream: &[f64]) -> Result<(Tensor2D, Tensor2D)> {
        self.check_pair(other)?;
        let floor = KL_PROB_FLOOR.ln();
        let (n, k) = self.logits.shape();
        let mut gp = Tensor2D::zeros(n, k);
        let mut gq = Tensor2D::zeros(n, k);
        for r in 0..n {
            let lp = self.log_probs.row(r);
            let lq = other.log_probs.row(r);
            let kl: f64 = lp
                .iter()
                .zip(lq)
                .map(|(&a, &b)| {
                    let w = a.exp();
                    if w == 0.0 {
                        0.0
                    } else {
                        w * (a - b.max(floor))
                    }
                })
                .sum();
            // Probability mass whose q-log is not clamped.
            let live: f64 = lp
                .iter()
                .zip(lq)
                .filter(|(_, &b)| b >= floor)
                .map(|(&a, _)| a.exp())
                .sum();
            let u = upstream[r];
            for j in 0..k {
                let pj = lp[j].exp();
                gp.set(r, j, u * pj * ((lp[j] - lq[j].max(floor)) - kl));
                let own = if lq[j] >= floor { pj } else { 0.0 };
                gq.set(r, j, u * (lq[j].exp() * live - own));
            }
        }
        Ok((gp, gq))
    }

    fn check_actions(&self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.batch() {
            return Err(Error::Shape {
                context: "Categorical actions",
                expected: (self.batch(), 1),
                actual: (actions.len(), 1),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.num_actions()) {
            return Err(Error::InvalidArgument(format!(
                "action {a} out of range for {} actions",
                self.num_actions()
            )));
        }
        Ok(())
    }

    fn check_pair(&self, other: &Categorical) -> Result<()> {
        other.logits.check_shape("Categorical KL pair", self.logits.shape())
    }
}
