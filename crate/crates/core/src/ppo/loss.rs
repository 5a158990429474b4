use super::PpoConfig;
use crate::distributions::gaussian_kl_shared_cov_grads;
use crate::envs::ActionBatch;
use crate::error::{Error, Result};
use crate::nn::{Activations, Tensor2D};
use crate::policy::{ActionDist, PolicyBundle};

/// Inputs of one PPO gradient step.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub teacher_obs: Tensor2D,
    pub actions: ActionBatch,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    /// Mean `KL(teacher ‖ proxy)` over the minibatch (0 when λ₂ = 0).
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Evaluates the teacher loss
/// `−mean(clipped surrogate) + c_v·mean((V − R)²) − c_e·mean(H) + λ₂·mean(KL(π_T ‖ π̂_S))`
/// and accumulates its gradients (callers zero them first).
///
/// The policy, value and entropy terms reach the teacher encoder, the shared
/// decoder, the critic and the log-std. The λ₂ term reaches the teacher
/// encoder (and the log-std for Gaussian policies); the decoder joins only
/// when `kl_to_decoder` is set. The proxy encoder is never touched. With
/// λ₂ = 0 the proxy is not evaluated at all.
pub fn ppo_teacher_loss(bundle: &mut PolicyBundle, mb: &Minibatch, cfg: &PpoConfig) -> Result<LossReport> {
    let n = mb.teacher_obs.rows();
    if n == 0
        || mb.actions.len() != n
        || mb.old_log_probs.len() != n
        || mb.advantages.len() != n
        || mb.returns.len() != n
    {
        return Err(Error::Shape {
            context: "ppo_teacher_loss minibatch",
            expected: (n, 1),
            actual: (mb.actions.len(), mb.advantages.len()),
        });
    }
    let inv_n = 1.0 / n as f64;
    let enc = bundle.teacher.forward_train(&mb.teacher_obs)?;
    let dec = bundle.decoder.forward_train(enc.output().expect("forward"))?;
    let dist = bundle.distribution(dec.output().expect("forward").detached())?;

    let log_probs = dist.log_prob(&mb.actions)?;
    let mut pg_up = vec![0.0; n];
    let (mut policy_loss, mut clipped) = (0.0, 0usize);
    for i in 0..n {
        let ratio = (log_probs[i] - mb.old_log_probs[i]).exp();
        let a = mb.advantages[i];
        let unclipped = ratio * a;
        let clipped_obj = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        if unclipped <= clipped_obj {
            policy_loss -= unclipped;
            pg_up[i] = -unclipped * inv_n;
        } else {
            policy_loss -= clipped_obj;
        }
    }
    policy_loss *= inv_n;
    let entropy = dist.entropy();
    let mean_entropy = entropy.iter().sum::<f64>() * inv_n;
    let ent_up = vec![-cfg.ent_coef * inv_n; n];

    let mut out_grad;
    let mut log_std_grad = None;
    match (&dist, &mb.actions) {
        (ActionDist::Categorical(c), ActionBatch::Discrete(a)) => {
            out_grad = c.log_prob_grad(a, &pg_up)?;
            add(&mut out_grad, &c.entropy_grad(&ent_up));
        }
        (ActionDist::Gaussian(g), ActionBatch::Continuous(a)) => {
            let lp = g.log_prob_grad(a, &pg_up)?;
            let eg = g.entropy_grad(&ent_up);
            let mut ls = lp.log_std_shared();
            out_grad = lp.mean;
            add(&mut out_grad, &eg.mean);
            for (l, e) in ls.iter_mut().zip(eg.log_std_shared()) {
                *l += e;
            }
            log_std_grad = Some(ls);
        }
        _ => return Err(Error::InvalidArgument("action kind does not match distribution".into())),
    }

    let mut feat_grad = bundle.decoder.backward(&dec, &out_grad)?;
    let mut mean_kl = 0.0;
    if cfg.lambda2 > 0.0 {
        let (kl, g, ls) = kl_feature_grad(
            bundle,
            &mb.teacher_obs,
            &dec,
            &dist,
            cfg.lambda2 * inv_n,
            cfg.kl_to_decoder,
        )?;
        mean_kl = kl;
        add(&mut feat_grad, &g);
        if let (Some(acc), Some(extra)) = (&mut log_std_grad, ls) {
            acc.iter_mut().zip(extra).for_each(|(a, e)| *a += e);
        }
    }
    bundle.teacher.backward(&enc, &feat_grad)?;
    if let (Some(ls), Some(g)) = (&mut bundle.log_std, log_std_grad) {
        ls.accumulate_grad(&g)?;
    }

    let crit = bundle.critic.forward_train(&mb.teacher_obs)?;
    let values = crit.output().expect("forward");
    let mut v_grad = Tensor2D::zeros(n, 1);
    let mut value_loss = 0.0;
    for i in 0..n {
        let d = values.get(i, 0) - mb.returns[i];
        value_loss += d * d;
        v_grad.set(i, 0, cfg.vf_coef * 2.0 * d * inv_n);
    }
    value_loss *= inv_n;
    bundle.critic.backward(&crit, &v_grad)?;

    let total = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * mean_entropy + cfg.lambda2 * mean_kl;
    if !total.is_finite() {
        return Err(Error::Numerical(diagnostic(
            mb,
            &log_probs,
            policy_loss,
            value_loss,
            mean_entropy,
            mean_kl,
        )));
    }
    Ok(LossReport {
        total,
        policy: policy_loss,
        value: value_loss,
        entropy: mean_entropy,
        kl: mean_kl,
        clip_fraction: clipped as f64 * inv_n,
    })
}

/// `λ₂ · mean KL(π_T ‖ π̂_S)` on its own, with the same gradient routing as in
/// [`ppo_teacher_loss`]; gradients are accumulated into the bundle.
pub fn kl_loss(bundle: &mut PolicyBundle, teacher_obs: &Tensor2D, lambda2: f64, kl_to_decoder: bool) -> Result<f64> {
    let n = teacher_obs.rows();
    let enc = bundle.teacher.forward_train(teacher_obs)?;
    let dec = bundle.decoder.forward_train(enc.output().expect("forward"))?;
    let dist = bundle.distribution(dec.output().expect("forward").detached())?;
    let (kl, g, ls) = kl_feature_grad(bundle, teacher_obs, &dec, &dist, lambda2 / n as f64, kl_to_decoder)?;
    bundle.teacher.backward(&enc, &g)?;
    if let (Some(p), Some(ls)) = (&mut bundle.log_std, ls) {
        p.accumulate_grad(&ls)?;
    }
    Ok(lambda2 * kl)
}

/// Mean KL, its gradient w.r.t. the teacher features (scaled by `weight` per
/// sample) and, for Gaussians, w.r.t. the shared log-std.
fn kl_feature_grad(
    bundle: &mut PolicyBundle,
    teacher_obs: &Tensor2D,
    teacher_dec: &Activations,
    teacher_dist: &ActionDist,
    weight: f64,
    kl_to_decoder: bool,
) -> Result<(f64, Tensor2D, Option<Vec<f64>>)> {
    let n = teacher_obs.rows();
    let proxy_feat = bundle.proxy.forward(teacher_obs)?;
    let proxy_dec = bundle.decoder.forward_train(&proxy_feat)?;
    let proxy_dist = bundle.distribution(proxy_dec.output().expect("forward").detached())?;
    let kl = teacher_dist.kl(&proxy_dist)?;
    let mean = kl.iter().sum::<f64>() / n as f64;
    let up = vec![weight; n];
    let (gt, gp, ls) = match (teacher_dist, &proxy_dist) {
        (ActionDist::Categorical(p), ActionDist::Categorical(q)) => {
            let (gp, gq) = p.kl_grads(q, &up)?;
            (gp, gq, None)
        }
        (ActionDist::Gaussian(t), ActionDist::Gaussian(s)) => {
            let (gt, gs, gl) = gaussian_kl_shared_cov_grads(t.mean(), s.mean(), t.log_std().row(0), &up)?;
            (gt, gs, Some(gl))
        }
        _ => return Err(Error::InvalidArgument("KL between different families".into())),
    };
    let feat_grad = if kl_to_decoder {
        bundle.decoder.backward(&proxy_dec, &gp)?;
        bundle.decoder.backward(teacher_dec, &gt)?
    } else {
        bundle.decoder.backward_input(teacher_dec, &gt)?
    };
    Ok((mean, feat_grad, ls))
}

fn add(acc: &mut Tensor2D, other: &Tensor2D) {
    acc.data_mut().iter_mut().zip(other.data()).for_each(|(a, b)| *a += b);
}

fn diagnostic(mb: &Minibatch, log_probs: &[f64], policy: f64, value: f64, entropy: f64, kl: f64) -> String {
    let bad_rows: Vec<usize> = (0..mb.teacher_obs.rows())
        .filter(|&i| {
            !log_probs[i].is_finite()
                || !mb.advantages[i].is_finite()
                || !mb.returns[i].is_finite()
                || mb.teacher_obs.row(i).iter().any(|v| !v.is_finite())
        })
        .take(8)
        .collect();
    format!(
        "non-finite PPO loss (policy {policy}, value {value}, entropy {entropy}, kl {kl}); \
         minibatch of {} rows, first offending rows {bad_rows:?}, \
         advantage range [{}, {}], return range [{}, {}]",
        mb.teacher_obs.rows(),
        fold_min(&mb.advantages),
        fold_max(&mb.advantages),
        fold_min(&mb.returns),
        fold_max(&mb.returns),
    )
}

fn fold_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
