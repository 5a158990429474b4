//! The policy bundle: teacher, student and proxy-student encoders feeding one
//! shared action decoder, plus the critic and an optional shared log-std.

use std::f64::consts::SQRT_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distributions::{gaussian_kl_shared_cov, Categorical, DiagGaussian};
use crate::envs::{ActionBatch, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpSpec, Tensor2D};

/// Network widths and initial log-std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub encoder_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub critic_hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![64, 64],
            feature_dim: 64,
            critic_hidden: vec![64, 64],
            init_log_std: 0.0,
        }
    }
}

/// Hidden-layer initialization gain.
pub const HIDDEN_GAIN: f64 = SQRT_2;
/// Policy output (decoder) initialization gain.
pub const POLICY_GAIN: f64 = 0.01;
/// Value output initialization gain.
pub const VALUE_GAIN: f64 = 1.0;

/// Independently updated parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamGroup {
    Teacher,
    Student,
    Proxy,
    Decoder,
    Critic,
    LogStd,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Teacher,
        ParamGroup::Student,
        ParamGroup::Proxy,
        ParamGroup::Decoder,
        ParamGroup::Critic,
        ParamGroup::LogStd,
    ];
}

/// Which encoder drives the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Teacher,
    Student,
    Proxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub teacher: Mlp,
    pub student: Mlp,
    pub proxy: Mlp,
    pub decoder: Mlp,
    pub critic: Mlp,
    /// `1 × d` state-independent log-std, shared by every actor (continuous actions only).
    pub log_std: Option<Tensor2D>,
    pub action_space: ActionSpace,
}

impl PolicyBundle {
    /// Initializes all networks from `rng` in the order teacher, student,
    /// proxy, decoder, critic.
    pub fn new<R: Rng + ?Sized>(
        teacher_obs_dim: usize,
        student_obs_dim: usize,
        action_space: ActionSpace,
        net: &NetConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = |input: usize, rng: &mut R| -> Result<Mlp> {
            let mut sizes = vec![input];
            sizes.extend_from_slice(&net.encoder_hidden);
            sizes.push(net.feature_dim);
            Mlp::new(
                &MlpSpec {
                    sizes: &sizes,
                    hidden_activation: Activation::Elu,
                    hidden_gain: HIDDEN_GAIN,
                    output_gain: HIDDEN_GAIN,
                },
                rng,
            )
        };
        let teacher = encoder(teacher_obs_dim, rng)?;
        let student = encoder(student_obs_dim, rng)?;
        let proxy = encoder(teacher_obs_dim, rng)?;
        let width = action_space.decoder_width();
        let decoder = Mlp::new(
            &MlpSpec {
                sizes: &[net.feature_dim, width],
                hidden_activation: Activation::Identity,
                hidden_gain: HIDDEN_GAIN,
                output_gain: POLICY_GAIN,
            },
            rng,
        )?;
        let mut critic_sizes = vec![teacher_obs_dim];
        critic_sizes.extend_from_slice(&net.critic_hidden);
        critic_sizes.push(1);
        let critic = Mlp::new(
            &MlpSpec {
                sizes: &critic_sizes,
                hidden_activation: Activation::Elu,
                hidden_gain: HIDDEN_GAIN,
                output_gain: VALUE_GAIN,
            },
            rng,
        )?;
        let log_std = match action_space {
            ActionSpace::Discrete(_) => None,
            ActionSpace::Continuous(d) => Some(Tensor2D::row_vector(&vec![net.init_log_std; d])),
        };
        Ok(Self {
            teacher,
            student,
            proxy,
            decoder,
            critic,
            log_std,
            action_space,
        })
    }

    pub fn encoder(&self, actor: Actor) -> &Mlp {
        match actor {
            Actor::Teacher => &self.teacher,
            Actor::Student => &self.student,
            Actor::Proxy => &self.proxy,
        }
    }

    /// Turns decoder outputs into the action distribution.
    pub fn distribution(&self, decoder_out: Tensor2D) -> Result<ActionDist> {
        match (self.action_space, &self.log_std) {
            (ActionSpace::Discrete(_), _) => Ok(ActionDist::Categorical(Categorical::from_logits(decoder_out))),
            (ActionSpace::Continuous(_), Some(ls)) => {
                Ok(ActionDist::Gaussian(DiagGaussian::shared(decoder_out, ls.data())?))
            }
            (ActionSpace::Continuous(_), None) => {
                Err(Error::InvalidArgument("continuous bundle without log-std".into()))
            }
        }
    }

    pub fn features(&self, actor: Actor, obs: &Tensor2D) -> Result<Tensor2D> {
        self.encoder(actor).forward(obs)
    }

    /// Decoder output (logits or means) for `actor` on its own observations.
    pub fn decode(&self, actor: Actor, obs: &Tensor2D) -> Result<Tensor2D> {
        self.decoder.forward(&self.features(actor, obs)?)
    }

    pub fn dist(&self, actor: Actor, obs: &Tensor2D) -> Result<ActionDist> {
        self.distribution(self.decode(actor, obs)?)
    }

    pub fn values(&self, teacher_obs: &Tensor2D) -> Result<Vec<f64>> {
        Ok(self.critic.forward(teacher_obs)?.into_data())
    }

    pub fn group(&self, g: ParamGroup) -> Vec<&Tensor2D> {
        match g {
            ParamGroup::Teacher => self.teacher.params(),
            ParamGroup::Student => self.student.params(),
            ParamGroup::Proxy => self.proxy.params(),
            ParamGroup::Decoder => self.decoder.params(),
            ParamGroup::Critic => self.critic.params(),
            ParamGroup::LogStd => self.log_std.iter().collect(),
        }
    }

    /// Parameters updated by the policy-update phase, in a fixed order.
    pub fn teacher_side_params_mut(&mut self) -> Vec<&mut Tensor2D> {
        let mut v = self.teacher.params_mut();
        v.extend(self.decoder.params_mut());
        v.extend(self.critic.params_mut());
        v.extend(self.log_std.iter_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.teacher.zero_grad();
        self.student.zero_grad();
        self.proxy.zero_grad();
        self.decoder.zero_grad();
        self.critic.zero_grad();
        if let Some(ls) = &mut self.log_std {
            ls.zero_grad();
        }
    }

    /// SHA-256 over the little-endian bytes of every value in the group.
    pub fn hash(&self, g: ParamGroup) -> String {
        let mut h = Sha256::new();
        for p in self.group(g) {
            h.update((p.rows() as u64).to_le_bytes());
            h.update((p.cols() as u64).to_le_bytes());
            for v in p.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hashes(&self) -> GroupHashes {
        GroupHashes(ParamGroup::ALL.map(|g| self.hash(g)))
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|p| p.is_finite()))
    }
}

/// Hashes of every [`ParamGroup`], in [`ParamGroup::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupHashes(pub [String; 6]);

impl GroupHashes {
    pub fn get(&self, g: ParamGroup) -> &str {
        &self.0[ParamGroup::ALL.iter().position(|&x| x == g).expect("listed")]
    }

    /// Groups whose hash differs between `self` and `after`.
    pub fn changed(&self, after: &GroupHashes) -> Vec<ParamGroup> {
        ParamGroup::ALL
            .iter()
            .copied()
            .filter(|&g| self.get(g) != after.get(g))
            .collect()
    }
}

/// Action distribution of either family.
#[derive(Debug, Clone)]
pub enum ActionDist {
    Categorical(Categorical),
    Gaussian(DiagGaussian),
}

impl ActionDist {
    pub fn batch(&self) -> usize {
        match self {
            ActionDist::Categorical(c) => c.batch(),
            ActionDist::Gaussian(g) => g.batch(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionBatch {
        match self {
            ActionDist::Categorical(c) => ActionBatch::Discrete(c.sample(rng)),
            ActionDist::Gaussian(g) => ActionBatch::Continuous(g.sample(rng)),
        }
    }

    pub fn mode(&self) -> ActionBatch {
        match self {
            ActionDist::Categorical(c) => ActionBatch::Discrete(c.mode()),
            ActionDist::Gaussian(g) => ActionBatch::Continuous(g.mode()),
        }
    }

    pub fn log_prob(&self, actions: &ActionBatch) -> Result<Vec<f64>> {
        match (self, actions) {
            (ActionDist::Categorical(c), ActionBatch::Discrete(a)) => c.log_prob(a),
            (ActionDist::Gaussian(g), ActionBatch::Continuous(a)) => g.log_prob(a),
            _ => Err(Error::InvalidArgument("action kind does not match distribution".into())),
        }
    }

    pub fn entropy(&self) -> Vec<f64> {
        match self {
            ActionDist::Categorical(c) => c.entropy(),
            ActionDist::Gaussian(g) => g.entropy(),
        }
    }

    /// `KL(self ‖ other)` per row. Gaussians use the shared-covariance form,
    /// valid because every actor shares one log-std.
    pub fn kl(&self, other: &ActionDist) -> Result<Vec<f64>> {
        match (self, other) {
            (ActionDist::Categorical(p), ActionDist::Categorical(q)) => p.kl(q),
            (ActionDist::Gaussian(t), ActionDist::Gaussian(s)) => {
                gaussian_kl_shared_cov(t.mean(), s.mean(), t.log_std().row(0))
            }
            _ => Err(Error::InvalidArgument("KL between different families".into())),
        }
    }
}
