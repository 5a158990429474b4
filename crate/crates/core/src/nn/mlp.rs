//! Sequential multilayer perceptrons with ELU hidden layers.
//!
//! Weights are stored `in × out` so a batch forward is `x · W + b`. The forward
//! pass used for training returns an [`Activations`] record holding every layer
//! input plus the final output; [`Mlp::backward`] consumes it, accumulates
//! parameter gradients (adding to whatever is already there) and returns the
//! gradient with respect to the network input.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tensor::{accumulate_affine_param_grads, affine, affine_input_grad, Tensor2D};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    ///
    /// For ELU, `y > 0 ⇔ z > 0` and `exp(z) = y + 1` otherwise.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if y > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor2D,
    pub bias: Tensor2D,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Values retained by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    /// `inputs[k]` is the input of layer `k`; the last entry is the network output.
    values: Vec<Tensor2D>,
}

impl Activations {
    pub fn output(&self) -> Option<&Tensor2D> {
        self.values.last()
    }

    pub fn input(&self) -> Option<&Tensor2D> {
        self.values.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Layer widths and initialization gains for [`Mlp::new`].
#[derive(Debug, Clone)]
pub struct MlpSpec<'a> {
    /// `[input, hidden..., output]`.
    pub sizes: &'a [usize],
    pub hidden_activation: Activation,
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl Mlp {
    /// Orthogonally initialized network; biases start at zero.
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec<'_>, rng: &mut R) -> Result<Self> {
        if spec.sizes.len() < 2 || spec.sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP needs at least two non-zero sizes, got {:?}",
                spec.sizes
            )));
        }
        let n = spec.sizes.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let last = k + 1 == n;
                let (act, gain) = if last {
                    (Activation::Identity, spec.output_gain)
                } else {
                    (spec.hidden_activation, spec.hidden_gain)
                };
                Dense {
                    weight: orthogonal(spec.sizes[k], spec.sizes[k + 1], gain, rng),
                    bias: Tensor2D::zeros(1, spec.sizes[k + 1]),
                    activation: act,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP without layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape {
                    context: "Mlp::from_layers chaining",
                    expected: (w[0].out_dim(), w[1].out_dim()),
                    actual: (w[1].in_dim(), w[1].out_dim()),
                });
            }
        }
        for l in &layers {
            l.bias.check_shape("Mlp::from_layers bias", (1, l.out_dim()))?;
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(Error::InvalidArgument(
                "final MLP layer must use the identity activation".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Inference forward pass.
    pub fn forward(&self, x: &Tensor2D) -> Result<Tensor2D> {
        self.check_input(x)?;
        let mut h = x.detached();
        for layer in &self.layers {
            h = layer_forward(layer, &h)?;
        }
        Ok(h)
    }

    /// Forward pass that keeps every intermediate value for [`Mlp::backward`].
    pub fn forward_train(&self, x: &Tensor2D) -> Result<Activations> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.detached());
        for layer in &self.layers {
            let next = layer_forward(layer, values.last().expect("non-empty"))?;
            values.push(next);
        }
        Ok(Activations { values })
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, acts: &Activations, upstream: &Tensor2D) -> Result<Tensor2D> {
        self.check_acts(acts, upstream)?;
        let mut g = upstream.detached();
        for (k, layer) in self.layers.iter_mut().enumerate().rev() {
            let out = &acts.values[k + 1];
            apply_activation_grad(layer.activation, out, &mut g);
            accumulate_affine_param_grads(&acts.values[k], &g, &mut layer.weight, &mut layer.bias);
            g = affine_input_grad(&g, &layer.weight);
        }
        Ok(g)
    }

    /// Input gradient only; parameters are treated as constants.
    pub fn backward_input(&self, acts: &Activations, upstream: &Tensor2D) -> Result<Tensor2D> {
        self.check_acts(acts, upstream)?;
        let mut g = upstream.detached();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let out = &acts.values[k + 1];
            apply_activation_grad(layer.activation, out, &mut g);
            g = affine_input_grad(&g, &layer.weight);
        }
        Ok(g)
    }

    fn check_input(&self, x: &Tensor2D) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                context: "Mlp input",
                expected: (x.rows(), self.in_dim()),
                actual: x.shape(),
            });
        }
        Ok(())
    }

    fn check_acts(&self, acts: &Activations, upstream: &Tensor2D) -> Result<()> {
        if acts.values.len() != self.layers.len() + 1 {
            return Err(Error::MissingForward("Mlp::backward"));
        }
        let out = acts.values.last().expect("non-empty");
        if out.cols() != self.out_dim() || acts.values[0].cols() != self.in_dim() {
            return Err(Error::MissingForward("activations belong to a different network"));
        }
        upstream.check_shape("Mlp::backward upstream", out.shape())
    }

    pub fn params(&self) -> Vec<&Tensor2D> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor2D> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data().len()).sum()
    }

    /// All parameter values concatenated in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::Shape {
                context: "Mlp::set_flat_params",
                expected: (self.num_params(), 1),
                actual: (values.len(), 1),
            });
        }
        let mut off = 0;
        for p in self.params_mut() {
            let n = p.data().len();
            p.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Gradients concatenated in the same order as [`Mlp::flat_params`]; missing slots read as zero.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| match p.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.data().len()],
            })
            .collect()
    }
}

fn layer_forward(layer: &Dense, x: &Tensor2D) -> Result<Tensor2D> {
    let mut y = affine(x, &layer.weight, &layer.bias)?;
    if layer.activation != Activation::Identity {
        for v in y.data_mut() {
            *v = layer.activation.apply(*v);
        }
    }
    Ok(y)
}

fn apply_activation_grad(act: Activation, out: &Tensor2D, g: &mut Tensor2D) {
    if act == Activation::Identity {
        return;
    }
    for (gi, &y) in g.data_mut().iter_mut().zip(out.data()) {
        *gi *= act.derivative_from_output(y);
    }
}

/// Orthogonal `rows × cols` matrix scaled by `gain` (QR of a Gaussian matrix, sign-corrected).
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor2D {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut t = Tensor2D::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            t.set(i, j, gain * v);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn spec(sizes: &[usize]) -> MlpSpec<'_> {
        MlpSpec {
            sizes,
            hidden_activation: Activation::Elu,
            hidden_gain: std::f64::consts::SQRT_2,
            output_gain: 1.0,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut w = Tensor2D::zeros(3, 3);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let net = Mlp::from_layers(vec![Dense {
            weight: w,
            bias: Tensor2D::zeros(1, 3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = Tensor2D::from_rows(&[vec![1.0, -2.0, 3.5]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn elu_saturates_at_minus_one() {
        assert!((Activation::Elu.apply(-20.0) + 1.0).abs() < 1e-8);
        assert_eq!(Activation::Elu.apply(2.0), 2.0);
    }

    #[test]
    fn rejects_bad_chaining_and_nonlinear_output() {
        let mut r = rng::from_seed(1);
        let a = orthogonal(2, 3, 1.0, &mut r);
        let b = orthogonal(4, 1, 1.0, &mut r);
        let layers = vec![
            Dense {
                weight: a,
                bias: Tensor2D::zeros(1, 3),
                activation: Activation::Elu,
            },
            Dense {
                weight: b,
                bias: Tensor2D::zeros(1, 1),
                activation: Activation::Identity,
            },
        ];
        assert!(Mlp::from_layers(layers).is_err());
        let c = orthogonal(2, 2, 1.0, &mut r);
        let layers = vec![Dense {
            weight: c,
            bias: Tensor2D::zeros(1, 2),
            activation: Activation::Elu,
        }];
        assert!(Mlp::from_layers(layers).is_err());
    }

    #[test]
    fn input_width_mismatch_is_shape_error() {
        let mut r = rng::from_seed(2);
        let net = Mlp::new(&spec(&[3, 4, 2]), &mut r).unwrap();
        let x = Tensor2D::zeros(5, 4);
        assert!(matches!(net.forward(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut r = rng::from_seed(3);
        let mut net = Mlp::new(&spec(&[3, 4, 2]), &mut r).unwrap();
        let up = Tensor2D::zeros(1, 2);
        assert!(matches!(
            net.backward(&Activations::default(), &up),
            Err(Error::MissingForward(_))
        ));
    }

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut r = rng::from_seed(4);
        let w = orthogonal(8, 5, 1.0, &mut r);
        for a in 0..5 {
            for b in 0..5 {
                let d: f64 = (0..8).map(|i| w.get(i, a) * w.get(i, b)).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
        let w = orthogonal(3, 6, 2.0, &mut r);
        for a in 0..3 {
            let d: f64 = (0..6).map(|j| w.get(a, j) * w.get(a, j)).sum();
            assert!((d - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut r = rng::from_seed(5);
        let mut net = Mlp::new(&spec(&[3, 6, 6, 2]), &mut r).unwrap();
        let x = Tensor2D::from_vec(4, 3, (0..12).map(|i| i as f64 * 0.1 - 0.5).collect()).unwrap();
        let acts = net.forward_train(&x).unwrap();
        let dx = net.backward(&acts, &Tensor2D::zeros(4, 2)).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(net.flat_grads().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_scalar_weight_gradient_is_input() {
        let net_w = Tensor2D::from_vec(1, 1, vec![0.7]).unwrap();
        let mut net = Mlp::from_layers(vec![Dense {
            weight: net_w,
            bias: Tensor2D::zeros(1, 1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let x = Tensor2D::from_vec(1, 1, vec![-1.25]).unwrap();
        let acts = net.forward_train(&x).unwrap();
        net.backward(&acts, &Tensor2D::from_vec(1, 1, vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(net.layers()[0].weight.grad().unwrap(), &[-1.25]);
        assert_eq!(net.layers()[0].bias.grad().unwrap(), &[1.0]);
    }

    #[test]
    fn accumulation_is_additive() {
        let mut r = rng::from_seed(6);
        let mut a = Mlp::new(&spec(&[3, 5, 2]), &mut r).unwrap();
        let mut b = a.clone();
        let x = Tensor2D::from_vec(2, 3, vec![0.3, -0.2, 0.9, -1.0, 0.4, 0.1]).unwrap();
        let up = Tensor2D::from_vec(2, 2, vec![0.5, -1.0, 0.25, 2.0]).unwrap();
        let up2 = up.map(|v| 2.0 * v);
        let acts = a.forward_train(&x).unwrap();
        a.backward(&acts, &up).unwrap();
        a.backward(&acts, &up).unwrap();
        let acts_b = b.forward_train(&x).unwrap();
        b.backward(&acts_b, &up2).unwrap();
        for (ga, gb) in a.flat_grads().iter().zip(b.flat_grads()) {
            assert!((ga - gb).abs() <= 1e-15 * gb.abs().max(1.0));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r = rng::from_seed(7);
        let net = Mlp::new(&spec(&[4, 8, 8, 3]), &mut r).unwrap();
        let x = Tensor2D::from_vec(3, 4, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let y1 = net.forward(&x).unwrap();
        let y2 = net.forward(&x).unwrap();
        let bits = |t: &Tensor2D| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&y1), bits(&y2));
        assert_eq!(bits(&y1), bits(net.forward_train(&x).unwrap().output().unwrap()));
    }
}
