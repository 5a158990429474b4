//! Imitation-gap diagnostics.

use crate::error::{Error, Result};
use crate::nn::Tensor2D;
use crate::policy::{Actor, PolicyBundle};

/// Mean `KL(π_T(·|s) ‖ π_S(·|s))` over paired observations of the same states,
/// using the real student (not the proxy).
pub fn estimate_epsilon(bundle: &PolicyBundle, teacher_obs: &Tensor2D, student_obs: &Tensor2D) -> Result<f64> {
    if teacher_obs.rows() != student_obs.rows() || teacher_obs.rows() == 0 {
        return Err(Error::Shape {
            context: "estimate_epsilon",
            expected: (teacher_obs.rows(), student_obs.cols()),
            actual: student_obs.shape(),
        });
    }
    let t = bundle.dist(Actor::Teacher, teacher_obs)?;
    let s = bundle.dist(Actor::Student, student_obs)?;
    let kl = t.kl(&s)?;
    Ok(kl.iter().sum::<f64>() / kl.len() as f64)
}

/// Upper bound on `J(π_T) − J(π_S)`: `2√2 · r_max / (1 − γ)² · √ε`.
pub fn performance_bound(r_max: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "performance bound needs 0 < γ < 1, got {gamma}"
        )));
    }
    if !(r_max >= 0.0 && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(
            "performance bound needs r_max ≥ 0 and ε ≥ 0".into(),
        ));
    }
    Ok(2.0 * 2f64.sqrt() * r_max / ((1.0 - gamma) * (1.0 - gamma)) * epsilon.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        assert_eq!(performance_bound(10.0, 0.9, 0.0).unwrap(), 0.0);
        // 2√2 · 10 / 0.01 · 0.2
        assert!((performance_bound(10.0, 0.9, 0.04).unwrap() - 565.685_424_949_238).abs() < 1e-9);
        assert!(performance_bound(10.0, 1.0, 0.1).is_err());
        assert!(performance_bound(10.0, 0.9, -0.1).is_err());
    }
}
