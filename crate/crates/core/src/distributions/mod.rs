//! Policy output distributions: categorical (discrete actions) and diagonal
//! Gaussian (continuous actions), with sampling, log-probabilities, entropy and
//! closed-form KL divergences together with their analytic gradients.
//!
//! KL is always taken teacher-first: `KL(teacher ‖ student)`.

mod categorical;
mod gaussian;

pub use categorical::{Categorical, KL_PROB_FLOOR};
pub use gaussian::{
    gaussian_kl_full, gaussian_kl_full_grads, gaussian_kl_shared_cov, gaussian_kl_shared_cov_grads, DiagGaussian,
    GaussianGrads,
};
