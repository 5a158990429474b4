//! Randomized finite-difference checks of every hand-written gradient.
//!
//! Each case perturbs one parameter vector, evaluates the scalar objective
//! with central differences and compares against the analytic gradient the
//! library computes for the same objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sitt_core::distributions::{
    gaussian_kl_full, gaussian_kl_full_grads, gaussian_kl_shared_cov, gaussian_kl_shared_cov_grads, Categorical,
    DiagGaussian,
};
use sitt_core::envs::{ActionBatch, ActionSpace};
use sitt_core::nn::gradcheck::{central_difference, relative_error};
use sitt_core::nn::{l1_loss, Activation, Mlp, MlpSpec, Tensor2D};
use sitt_core::policy::{NetConfig, ParamGroup, PolicyBundle};
use sitt_core::ppo::{kl_loss, ppo_teacher_loss, Minibatch, PpoConfig};
use sitt_core::trainer::{proxy_alignment_grad, student_alignment_grad};

pub const STEP: f64 = 1e-5;
pub const FLOOR: f64 = 1e-8;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub rel_err: f64,
}

fn case(name: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Case {
    Case {
        name: name.into(),
        rel_err: relative_error(analytic, numeric, FLOOR),
    }
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2D {
    let data = (0..rows * cols).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Tensor2D::from_vec(rows, cols, data).unwrap()
}

fn weighted_sum(t: &Tensor2D, w: &Tensor2D) -> f64 {
    t.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_mlp(rng: &mut ChaCha8Rng) -> Mlp {
    let depth = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=7)).collect();
    let act = if rng.random_bool(0.8) {
        Activation::Elu
    } else {
        Activation::Identity
    };
    let mut m = Mlp::new(
        &MlpSpec {
            sizes: &sizes,
            hidden_activation: act,
            hidden_gain: 1.4,
            output_gain: 1.0,
        },
        rng,
    )
    .unwrap();
    let p: Vec<f64> = m
        .flat_params()
        .iter()
        .map(|v| v + 0.3 * rng.random_range(-1.0..1.0))
        .collect();
    m.set_flat_params(&p).unwrap();
    m
}

fn mlp_param_case(rng: &mut ChaCha8Rng, i: usize) -> Case {
    let mut m = random_mlp(rng);
    let n = rng.random_range(1..=5);
    let x = randn(rng, n, m.in_dim(), 2.0);
    let w = randn(rng, n, m.out_dim(), 1.0);
    let acts = m.forward_train(&x).unwrap();
    m.zero_grad();
    m.backward(&acts, &w).unwrap();
    let analytic = m.flat_grads();
    let probe = m.clone();
    let numeric = central_difference(
        |p| {
            let mut q = probe.clone();
            q.set_flat_params(p).unwrap();
            weighted_sum(&q.forward(&x).unwrap(), &w)
        },
        &m.flat_params(),
        STEP,
    );
    case(format!("mlp params #{i}"), &analytic, &numeric)
}

fn mlp_input_case(rng: &mut ChaCha8Rng, i: usize) -> Case {
    let m = random_mlp(rng);
    let n = rng.random_range(1..=5);
    let x = randn(rng, n, m.in_dim(), 2.0);
    let w = randn(rng, n, m.out_dim(), 1.0);
    let acts = m.forward_train(&x).unwrap();
    let analytic = m.backward_input(&acts, &w).unwrap();
    let numeric = central_difference(
        |v| {
            weighted_sum(
                &m.forward(&Tensor2D::from_vec(n, m.in_dim(), v.to_vec()).unwrap())
                    .unwrap(),
                &w,
            )
        },
        x.data(),
        STEP,
    );
    case(format!("mlp input #{i}"), analytic.data(), &numeric)
}

fn logits(rng: &mut ChaCha8Rng) -> (usize, usize, Tensor2D) {
    let n = rng.random_range(1..=4);
    let k = rng.random_range(2..=6);
    (n, k, randn(rng, n, k, 3.0))
}

fn categorical_cases(rng: &mut ChaCha8Rng, i: usize) -> Vec<Case> {
    let (n, k, z) = logits(rng);
    let up: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let c = Categorical::from_logits(z.clone());
    let build = |v: &[f64]| Categorical::from_logits(Tensor2D::from_vec(n, k, v.to_vec()).unwrap());

    let lp = c.log_prob_grad(&actions, &up).unwrap();
    let lp_num = central_difference(|v| dot(&build(v).log_prob(&actions).unwrap(), &up), z.data(), STEP);
    let ent = c.entropy_grad(&up);
    let ent_num = central_difference(|v| dot(&build(v).entropy(), &up), z.data(), STEP);

    let q_logits = randn(rng, n, k, 3.0);
    let q = Categorical::from_logits(q_logits.clone());
    let (gp, gq) = c.kl_grads(&q, &up).unwrap();
    let gp_num = central_difference(|v| dot(&build(v).kl(&q).unwrap(), &up), z.data(), STEP);
    let gq_num = central_difference(|v| dot(&c.kl(&build(v)).unwrap(), &up), q_logits.data(), STEP);
    vec![
        case(format!("categorical log-prob #{i}"), lp.data(), &lp_num),
        case(format!("categorical entropy #{i}"), ent.data(), &ent_num),
        case(format!("categorical KL first argument #{i}"), gp.data(), &gp_num),
        case(format!("categorical KL second argument #{i}"), gq.data(), &gq_num),
    ]
}

fn concat(a: &Tensor2D, b: &Tensor2D) -> Vec<f64> {
    a.data().iter().chain(b.data()).copied().collect()
}

fn gaussian_cases(rng: &mut ChaCha8Rng, i: usize) -> Vec<Case> {
    let n = rng.random_range(1..=4);
    let d = rng.random_range(1..=3);
    let up: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (mt, lt) = (randn(rng, n, d, 1.5), randn(rng, n, d, 0.8));
    let (ms, ls) = (randn(rng, n, d, 1.5), randn(rng, n, d, 0.8));
    let actions = randn(rng, n, d, 2.0);
    let t = DiagGaussian::new(mt.clone(), lt.clone()).unwrap();
    let s = DiagGaussian::new(ms.clone(), ls.clone()).unwrap();
    let split = |v: &[f64]| {
        DiagGaussian::new(
            Tensor2D::from_vec(n, d, v[..n * d].to_vec()).unwrap(),
            Tensor2D::from_vec(n, d, v[n * d..].to_vec()).unwrap(),
        )
        .unwrap()
    };
    let x_t = concat(&mt, &lt);
    let x_s = concat(&ms, &ls);

    let g = t.log_prob_grad(&actions, &up).unwrap();
    let g_num = central_difference(|v| dot(&split(v).log_prob(&actions).unwrap(), &up), &x_t, STEP);
    let e = t.entropy_grad(&up);
    let e_num = central_difference(|v| dot(&split(v).entropy(), &up), &x_t, STEP);

    let (gt, gs) = gaussian_kl_full_grads(&t, &s, &up).unwrap();
    let gt_num = central_difference(|v| dot(&gaussian_kl_full(&split(v), &s).unwrap(), &up), &x_t, STEP);
    let gs_num = central_difference(|v| dot(&gaussian_kl_full(&t, &split(v)).unwrap(), &up), &x_s, STEP);

    let shared: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..0.5)).collect();
    let (st, ss, sl) = gaussian_kl_shared_cov_grads(&mt, &ms, &shared, &up).unwrap();
    let mut x_shared = concat(&mt, &ms);
    x_shared.extend_from_slice(&shared);
    let shared_num = central_difference(
        |v| {
            let a = Tensor2D::from_vec(n, d, v[..n * d].to_vec()).unwrap();
            let b = Tensor2D::from_vec(n, d, v[n * d..2 * n * d].to_vec()).unwrap();
            dot(&gaussian_kl_shared_cov(&a, &b, &v[2 * n * d..]).unwrap(), &up)
        },
        &x_shared,
        STEP,
    );
    let mut shared_analytic = concat(&st, &ss);
    shared_analytic.extend_from_slice(&sl);

    vec![
        case(format!("gaussian log-prob #{i}"), &concat(&g.mean, &g.log_std), &g_num),
        case(format!("gaussian entropy #{i}"), &concat(&e.mean, &e.log_std), &e_num),
        case(
            format!("gaussian full KL first argument #{i}"),
            &concat(&gt.mean, &gt.log_std),
            &gt_num,
        ),
        case(
            format!("gaussian full KL second argument #{i}"),
            &concat(&gs.mean, &gs.log_std),
            &gs_num,
        ),
        case(
            format!("gaussian shared-covariance KL #{i}"),
            &shared_analytic,
            &shared_num,
        ),
    ]
}

const TEACHER_OBS: usize = 5;
const STUDENT_OBS: usize = 4;

/// Small bundle with every parameter perturbed away from its initialization.
pub fn random_bundle(rng: &mut ChaCha8Rng, space: ActionSpace) -> PolicyBundle {
    let net = NetConfig {
        encoder_hidden: vec![6],
        feature_dim: 5,
        critic_hidden: vec![6],
        init_log_std: rng.random_range(-0.7..0.2),
    };
    let mut b = PolicyBundle::new(TEACHER_OBS, STUDENT_OBS, space, &net, rng).unwrap();
    for g in ParamGroup::ALL {
        let p: Vec<f64> = get(&b, g)
            .iter()
            .map(|v| v + 0.4 * rng.random_range(-1.0..1.0))
            .collect();
        set(&mut b, g, &p);
    }
    b
}

pub fn get(b: &PolicyBundle, g: ParamGroup) -> Vec<f64> {
    b.group(g).iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub fn grads(b: &PolicyBundle, g: ParamGroup) -> Vec<f64> {
    b.group(g)
        .iter()
        .flat_map(|t| match t.grad() {
            Some(v) => v.to_vec(),
            None => vec![0.0; t.data().len()],
        })
        .collect()
}

pub fn set(b: &mut PolicyBundle, g: ParamGroup, v: &[f64]) {
    match g {
        ParamGroup::Teacher => b.teacher.set_flat_params(v).unwrap(),
        ParamGroup::Student => b.student.set_flat_params(v).unwrap(),
        ParamGroup::Proxy => b.proxy.set_flat_params(v).unwrap(),
        ParamGroup::Decoder => b.decoder.set_flat_params(v).unwrap(),
        ParamGroup::Critic => b.critic.set_flat_params(v).unwrap(),
        ParamGroup::LogStd => {
            if let Some(ls) = &mut b.log_std {
                ls.data_mut().copy_from_slice(v);
            }
        }
    }
}

/// Numeric gradient of `f(bundle)` w.r.t. one parameter group.
fn numeric(b: &PolicyBundle, g: ParamGroup, f: impl Fn(&mut PolicyBundle) -> f64) -> Vec<f64> {
    central_difference(
        |v| {
            let mut q = b.clone();
            set(&mut q, g, v);
            f(&mut q)
        },
        &get(b, g),
        STEP,
    )
}

/// Log-ratios kept away from the clip boundaries so the objective is smooth at the probe.
fn safe_log_ratio(rng: &mut ChaCha8Rng, clip: f64) -> f64 {
    let lo = (1.0 - clip).ln();
    let hi = (1.0 + clip).ln();
    match rng.random_range(0..3) {
        0 => rng.random_range(0.5 * lo..0.5 * hi),
        1 => rng.random_range(hi + 0.05..hi + 0.3),
        _ => rng.random_range(lo - 0.3..lo - 0.05),
    }
}

pub fn random_minibatch(rng: &mut ChaCha8Rng, b: &PolicyBundle, clip: f64) -> Minibatch {
    let n = rng.random_range(2..=6);
    let obs = randn(rng, n, TEACHER_OBS, 1.5);
    let dist = b.dist(sitt_core::policy::Actor::Teacher, &obs).unwrap();
    let actions = match b.action_space {
        ActionSpace::Discrete(k) => ActionBatch::Discrete((0..n).map(|_| rng.random_range(0..k)).collect()),
        ActionSpace::Continuous(d) => ActionBatch::Continuous(randn(rng, n, d, 1.5)),
    };
    let lp = dist.log_prob(&actions).unwrap();
    Minibatch {
        teacher_obs: obs,
        old_log_probs: lp.iter().map(|l| l - safe_log_ratio(rng, clip)).collect(),
        actions,
        advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        returns: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
    }
}

fn ppo_cases(rng: &mut ChaCha8Rng, i: usize, space: ActionSpace, kl_to_decoder: bool) -> Vec<Case> {
    let b = random_bundle(rng, space);
    let cfg = PpoConfig {
        ent_coef: rng.random_range(0.0..0.5),
        lambda2: rng.random_range(0.001..2.0),
        kl_to_decoder,
        ..PpoConfig::default()
    };
    let mb = random_minibatch(rng, &b, cfg.clip);
    let mut a = b.clone();
    a.zero_grad();
    ppo_teacher_loss(&mut a, &mb, &cfg).unwrap();
    let total = |q: &mut PolicyBundle| ppo_teacher_loss(q, &mb, &cfg).unwrap().total;
    let without_kl = |q: &mut PolicyBundle| {
        let r = ppo_teacher_loss(q, &mb, &cfg).unwrap();
        r.total - cfg.lambda2 * r.kl
    };
    let tag = format!(
        "{} kl_to_decoder={kl_to_decoder} #{i}",
        if matches!(space, ActionSpace::Discrete(_)) {
            "discrete"
        } else {
            "continuous"
        }
    );
    let mut out = vec![
        case(
            format!("ppo loss teacher encoder {tag}"),
            &grads(&a, ParamGroup::Teacher),
            &numeric(&b, ParamGroup::Teacher, total),
        ),
        case(
            format!("ppo loss critic {tag}"),
            &grads(&a, ParamGroup::Critic),
            &numeric(&b, ParamGroup::Critic, total),
        ),
    ];
    let dec_num = if kl_to_decoder {
        numeric(&b, ParamGroup::Decoder, total)
    } else {
        numeric(&b, ParamGroup::Decoder, without_kl)
    };
    out.push(case(
        format!("ppo loss decoder {tag}"),
        &grads(&a, ParamGroup::Decoder),
        &dec_num,
    ));
    if b.log_std.is_some() {
        out.push(case(
            format!("ppo loss log-std {tag}"),
            &grads(&a, ParamGroup::LogStd),
            &numeric(&b, ParamGroup::LogStd, total),
        ));
    }
    out
}

fn kl_loss_cases(rng: &mut ChaCha8Rng, i: usize, space: ActionSpace) -> Vec<Case> {
    let b = random_bundle(rng, space);
    let rows = rng.random_range(1..=5);
    let obs = randn(rng, rows, TEACHER_OBS, 1.5);
    let lambda2 = rng.random_range(0.01..3.0);
    let mut a = b.clone();
    a.zero_grad();
    kl_loss(&mut a, &obs, lambda2, true).unwrap();
    let f = |q: &mut PolicyBundle| kl_loss(q, &obs, lambda2, true).unwrap();
    let mut out = vec![
        case(
            format!("kl loss teacher encoder #{i}"),
            &grads(&a, ParamGroup::Teacher),
            &numeric(&b, ParamGroup::Teacher, f),
        ),
        case(
            format!("kl loss decoder #{i}"),
            &grads(&a, ParamGroup::Decoder),
            &numeric(&b, ParamGroup::Decoder, f),
        ),
    ];
    if b.log_std.is_some() {
        out.push(case(
            format!("kl loss log-std #{i}"),
            &grads(&a, ParamGroup::LogStd),
            &numeric(&b, ParamGroup::LogStd, f),
        ));
    }
    out
}

fn alignment_cases(rng: &mut ChaCha8Rng, i: usize) -> Vec<Case> {
    let space = if rng.random_bool(0.5) {
        ActionSpace::Discrete(4)
    } else {
        ActionSpace::Continuous(2)
    };
    let b = random_bundle(rng, space);
    let n = rng.random_range(1..=5);
    let obs_t = randn(rng, n, TEACHER_OBS, 1.5);
    let obs_s = randn(rng, n, STUDENT_OBS, 1.5);
    let feat_t = b.teacher.forward(&obs_t).unwrap();
    let out_t = b.decoder.forward(&feat_t).unwrap();

    let mut a = b.clone();
    student_alignment_grad(&mut a, &obs_s, &feat_t, &out_t).unwrap();
    let student = numeric(&b, ParamGroup::Student, |q| {
        let f = q.student.forward(&obs_s).unwrap();
        let o = q.decoder.forward(&f).unwrap();
        l1_loss(&f, &feat_t).unwrap().0 + l1_loss(&o, &out_t).unwrap().0
    });

    let target = randn(rng, n, b.proxy.out_dim(), 1.0);
    let mut p = b.clone();
    proxy_alignment_grad(&mut p, &obs_t, &target).unwrap();
    let proxy = numeric(&b, ParamGroup::Proxy, |q| {
        l1_loss(&q.proxy.forward(&obs_t).unwrap(), &target).unwrap().0
    });
    vec![
        case(
            format!("student alignment L1 #{i}"),
            &grads(&a, ParamGroup::Student),
            &student,
        ),
        case(
            format!("proxy alignment L1 #{i}"),
            &grads(&p, ParamGroup::Proxy),
            &proxy,
        ),
    ]
}

/// Runs every randomized case from `seed`.
pub fn suite(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..16 {
        out.push(mlp_param_case(&mut rng, i));
        out.push(mlp_input_case(&mut rng, i));
    }
    for i in 0..8 {
        out.extend(categorical_cases(&mut rng, i));
        out.extend(gaussian_cases(&mut rng, i));
    }
    for i in 0..5 {
        for kl_to_decoder in [true, false] {
            out.extend(ppo_cases(&mut rng, i, ActionSpace::Discrete(4), kl_to_decoder));
            out.extend(ppo_cases(&mut rng, i, ActionSpace::Continuous(2), kl_to_decoder));
        }
        out.extend(kl_loss_cases(&mut rng, i, ActionSpace::Discrete(4)));
        out.extend(kl_loss_cases(&mut rng, i, ActionSpace::Continuous(2)));
        out.extend(alignment_cases(&mut rng, i));
    }
    out
}

/// Mean and standard error of `log t(x) − log s(x)` for `x ~ t`, computed
/// from the textbook density without library code.
pub fn monte_carlo_kl(mt: &[f64], st: &[f64], ms: &[f64], ss: &[f64], samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<Normal<f64>> = mt.iter().zip(st).map(|(&m, &s)| Normal::new(m, s).unwrap()).collect();
    let log_density =
        |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let mut v = 0.0;
        for k in 0..mt.len() {
            let x = normals[k].sample(&mut rng);
            v += log_density(x, mt[k], st[k]) - log_density(x, ms[k], ss[k]);
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
