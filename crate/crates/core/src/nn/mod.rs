//! Dense numeric substrate: matrices, MLPs, Adam, finite-difference checks.

pub mod adam;
pub mod gradcheck;
pub mod mlp;
pub mod tensor;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use mlp::{Activation, Activations, Dense, Mlp, MlpSpec};
pub use tensor::{affine, Tensor2D};

/// Mean absolute difference and its gradient w.r.t. `pred` (`sign(pred − target) / len`).
pub fn l1_loss(pred: &Tensor2D, target: &Tensor2D) -> crate::Result<(f64, Tensor2D)> {
    target.check_shape("l1_loss target", pred.shape())?;
    let n = pred.data().len().max(1) as f64;
    let mut grad = Tensor2D::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((loss / n, grad))
}
