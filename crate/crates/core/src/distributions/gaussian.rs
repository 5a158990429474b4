use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::Tensor2D;

/// Batch of diagonal Gaussians: `mean` and `log_std` are both `n × d`.
///
/// A state-independent log-std vector is broadcast with [`DiagGaussian::shared`].
#[derive(Debug, Clone)]
pub struct DiagGaussian {
    mean: Tensor2D,
    log_std: Tensor2D,
}

/// Gradients of a scalar w.r.t. a Gaussian's parameters.
#[derive(Debug, Clone)]
pub struct GaussianGrads {
    pub mean: Tensor2D,
    pub log_std: Tensor2D,
}

impl GaussianGrads {
    /// Column sums of the log-std gradient (the gradient of a shared log-std vector).
    pub fn log_std_shared(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.log_std.cols()];
        for r in 0..self.log_std.rows() {
            for (o, g) in out.iter_mut().zip(self.log_std.row(r)) {
                *o += g;
            }
        }
        out
    }
}

impl DiagGaussian {
    pub fn new(mean: Tensor2D, log_std: Tensor2D) -> Result<Self> {
        log_std.check_shape("DiagGaussian log_std", mean.shape())?;
        if !log_std.is_finite() {
            return Err(Error::Numerical("non-finite log-std".into()));
        }
        Ok(Self { mean, log_std })
    }

    pub fn shared(mean: Tensor2D, log_std: &[f64]) -> Result<Self> {
        if log_std.len() != mean.cols() {
            return Err(Error::Shape {
                context: "DiagGaussian shared log_std",
                expected: (1, mean.cols()),
                actual: (1, log_std.len()),
            });
        }
        let mut ls = Tensor2D::zeros(mean.rows(), mean.cols());
        for r in 0..mean.rows() {
            ls.row_mut(r).copy_from_slice(log_std);
        }
        Self::new(mean, ls)
    }

    pub fn mean(&self) -> &Tensor2D {
        &self.mean
    }

    pub fn log_std(&self) -> &Tensor2D {
        &self.log_std
    }

    pub fn batch(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor2D {
        let mut out = self.mean.detached();
        for (x, &ls) in out.data_mut().iter_mut().zip(self.log_std.data()) {
            let z: f64 = rng.sample(StandardNormal);
            *x += ls.exp() * z;
        }
        out
    }

    pub fn log_prob(&self, actions: &Tensor2D) -> Result<Vec<f64>> {
        actions.check_shape("DiagGaussian actions", self.mean.shape())?;
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        Ok((0..self.batch())
            .map(|r| {
                let (a, m, ls) = (actions.row(r), self.mean.row(r), self.log_std.row(r));
                (0..self.dim())
                    .map(|k| {
                        let z = (a[k] - m[k]) / ls[k].exp();
                        -0.5 * z * z - ls[k] - half_log_2pi
                    })
                    .sum()
            })
            .collect())
    }

    /// Gradient of `Σᵣ upstream[r] · log p(actions[r])`.
    pub fn log_prob_grad(&self, actions: &Tensor2D, upstream: &[f64]) -> Result<GaussianGrads> {
        actions.check_shape("DiagGaussian actions", self.mean.shape())?;
        let (n, d) = self.mean.shape();
        let mut gm = Tensor2D::zeros(n, d);
        let mut gs = Tensor2D::zeros(n, d);
        for r in 0..n {
            for k in 0..d {
                let sigma = self.log_std.get(r, k).exp();
                let z = (actions.get(r, k) - self.mean.get(r, k)) / sigma;
                gm.set(r, k, upstream[r] * z / sigma);
                gs.set(r, k, upstream[r] * (z * z - 1.0));
            }
        }
        Ok(GaussianGrads { mean: gm, log_std: gs })
    }

    /// `Σᵢ (½ ln(2πe) + ln σᵢ)` per row.
    pub fn entropy(&self) -> Vec<f64> {
        let c = 0.5 * (2.0 * PI * E).ln();
        (0..self.batch())
            .map(|r| self.log_std.row(r).iter().map(|ls| c + ls).sum())
            .collect()
    }

    pub fn entropy_grad(&self, upstream: &[f64]) -> GaussianGrads {
        let (n, d) = self.mean.shape();
        let mut gs = Tensor2D::zeros(n, d);
        for r in 0..n {
            gs.row_mut(r).iter_mut().for_each(|g| *g = upstream[r]);
        }
        GaussianGrads {
            mean: Tensor2D::zeros(n, d),
            log_std: gs,
        }
    }

    pub fn mode(&self) -> Tensor2D {
        self.mean.detached()
    }
}

/// `KL(t ‖ s) = ½[ln|Σ_s|/|Σ_t| − d + tr(Σ_s⁻¹Σ_t) + (μ_t−μ_s)ᵀΣ_s⁻¹(μ_t−μ_s)]` per row.
pub fn gaussian_kl_full(t: &DiagGaussian, s: &DiagGaussian) -> Result<Vec<f64>> {
    s.mean.check_shape("gaussian_kl_full", t.mean.shape())?;
    Ok((0..t.batch())
        .map(|r| {
            let mut acc = 0.0;
            for k in 0..t.dim() {
                let (lt, ls) = (t.log_std.get(r, k), s.log_std.get(r, k));
                let ratio = (2.0 * (lt - ls)).exp();
                let dm = t.mean.get(r, k) - s.mean.get(r, k);
                acc += 2.0 * (ls - lt) - 1.0 + ratio + dm * dm * (-2.0 * ls).exp();
            }
            (0.5 * acc).max(0.0)
        })
        .collect())
}

/// Gradients of `Σᵣ upstream[r] · KL(t_r ‖ s_r)` w.r.t. `(t, s)`.
pub fn gaussian_kl_full_grads(
    t: &DiagGaussian,
    s: &DiagGaussian,
    upstream: &[f64],
) -> Result<(GaussianGrads, GaussianGrads)> {
    s.mean.check_shape("gaussian_kl_full_grads", t.mean.shape())?;
    let (n, d) = t.mean.shape();
    let mut tm = Tensor2D::zeros(n, d);
    let mut ts = Tensor2D::zeros(n, d);
    let mut sm = Tensor2D::zeros(n, d);
    let mut ss = Tensor2D::zeros(n, d);
    for r in 0..n {
        let u = upstream[r];
        for k in 0..d {
            let (lt, ls) = (t.log_std.get(r, k), s.log_std.get(r, k));
            let inv_var_s = (-2.0 * ls).exp();
            let ratio = (2.0 * (lt - ls)).exp();
            let dm = t.mean.get(r, k) - s.mean.get(r, k);
            tm.set(r, k, u * dm * inv_var_s);
            sm.set(r, k, -u * dm * inv_var_s);
            ts.set(r, k, u * (ratio - 1.0));
            ss.set(r, k, u * (1.0 - ratio - dm * dm * inv_var_s));
        }
    }
    Ok((
        GaussianGrads { mean: tm, log_std: ts },
        GaussianGrads { mean: sm, log_std: ss },
    ))
}

/// KL between Gaussians that share one diagonal covariance:
/// `½ (μ_t − μ_s)ᵀ Σ⁻¹ (μ_t − μ_s)` (the log-det, trace and dimension terms cancel).
pub fn gaussian_kl_shared_cov(mu_t: &Tensor2D, mu_s: &Tensor2D, log_std: &[f64]) -> Result<Vec<f64>> {
    mu_s.check_shape("gaussian_kl_shared_cov", mu_t.shape())?;
    if log_std.len() != mu_t.cols() {
        return Err(Error::Shape {
            context: "gaussian_kl_shared_cov log_std",
            expected: (1, mu_t.cols()),
            actual: (1, log_std.len()),
        });
    }
    if log_std.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite log-std".into()));
    }
    Ok((0..mu_t.rows())
        .map(|r| {
            0.5 * mu_t
                .row(r)
                .iter()
                .zip(mu_s.row(r))
                .zip(log_std)
                .map(|((a, b), ls)| (a - b) * (a - b) * (-2.0 * ls).exp())
                .sum::<f64>()
        })
        .collect())
}

/// Gradients of `Σᵣ upstream[r] · KL_shared` w.r.t. `(μ_t, μ_s, shared log-std)`.
pub fn gaussian_kl_shared_cov_grads(
    mu_t: &Tensor2D,
    mu_s: &Tensor2D,
    log_std: &[f64],
    upstream: &[f64],
) -> Result<(Tensor2D, Tensor2D, Vec<f64>)> {
    mu_s.check_shape("gaussian_kl_shared_cov_grads", mu_t.shape())?;
    let (n, d) = mu_t.shape();
    let mut gt = Tensor2D::zeros(n, d);
    let mut gs = Tensor2D::zeros(n, d);
    let mut gl = vec![0.0; d];
    for r in 0..n {
        for k in 0..d {
            let inv_var = (-2.0 * log_std[k]).exp();
            let dm = mu_t.get(r, k) - mu_s.get(r, k);
            gt.set(r, k, upstream[r] * dm * inv_var);
            gs.set(r, k, -upstream[r] * dm * inv_var);
            gl[k] -= upstream[r] * dm * dm * inv_var;
        }
    }
    Ok((gt, gs, gl))
}
