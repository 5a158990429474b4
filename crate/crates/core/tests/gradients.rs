mod common;

use common::grad::{monte_carlo_kl, suite, TOLERANCE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use sitt_core::distributions::{gaussian_kl_full, gaussian_kl_shared_cov, DiagGaussian};
use sitt_core::nn::Tensor2D;

#[test]
fn every_analytic_gradient_matches_central_differences() {
    let cases = suite(7);
    assert!(cases.len() >= 100, "only {} cases", cases.len());
    let bad: Vec<_> = cases.iter().filter(|c| !(c.rel_err < TOLERANCE)).collect();
    assert!(bad.is_empty(), "failing cases: {bad:#?}");
}

#[test]
fn closed_form_kl_matches_monte_carlo() {
    let cases: [(&[f64], &[f64], &[f64], &[f64]); 2] = [
        (&[0.7, -0.4], &[0.3, -0.5], &[-0.1, 0.2], &[-0.2, 0.1]),
        (
            &[0.3, -1.2, 0.5],
            &[-0.2, 0.4, 0.1],
            &[0.0, -0.7, 1.1],
            &[0.1, 0.0, -0.3],
        ),
    ];
    for (i, (mt, lt, ms, ls)) in cases.into_iter().enumerate() {
        let row = |v: &[f64]| Tensor2D::from_vec(1, v.len(), v.to_vec()).unwrap();
        let t = DiagGaussian::new(row(mt), row(lt)).unwrap();
        let s = DiagGaussian::new(row(ms), row(ls)).unwrap();
        let closed = gaussian_kl_full(&t, &s).unwrap()[0];
        let sd = |l: &[f64]| l.iter().map(|x| x.exp()).collect::<Vec<_>>();
        let (mc, se) = monte_carlo_kl(mt, &sd(lt), ms, &sd(ls), 1_000_000, 11 + i as u64);
        assert!(
            (closed - mc).abs() < 3.0 * se,
            "d={} closed {closed} mc {mc} se {se}",
            mt.len()
        );
    }
}

#[test]
fn shared_covariance_form_equals_full_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unif = rand_distr::Uniform::new(-2.0, 2.0).unwrap();
    for _ in 0..200 {
        let d = 3;
        let mt: Vec<f64> = (0..2 * d).map(|_| unif.sample(&mut rng)).collect();
        let ms: Vec<f64> = (0..2 * d).map(|_| unif.sample(&mut rng)).collect();
        let ls: Vec<f64> = (0..d).map(|_| 0.5 * unif.sample(&mut rng)).collect();
        let mt = Tensor2D::from_vec(2, d, mt).unwrap();
        let ms = Tensor2D::from_vec(2, d, ms).unwrap();
        let full = gaussian_kl_full(
            &DiagGaussian::shared(mt.clone(), &ls).unwrap(),
            &DiagGaussian::shared(ms.clone(), &ls).unwrap(),
        )
        .unwrap();
        let shared = gaussian_kl_shared_cov(&mt, &ms, &ls).unwrap();
        for (a, b) in full.iter().zip(&shared) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}
