use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::policy::{self, ACTION_HALF, ACTION_MID};
use super::{Adam, Mlp, MlpCache, RunningNorm, TransitionBatch};
use crate::math::{exp, ln};
use crate::rng::{stream_rng, streams, RngState, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr_q: f64,
    pub lr_policy: f64,
    pub lr_alpha: f64,
    /// EMA weight of the online critic in each target update.
    pub target_smoothing: f64,
    /// Gradient steps between target updates.
    pub target_update_interval: usize,
    pub replay_capacity: usize,
    pub initial_alpha: f64,
    /// Defaults to minus the action dimension.
    #[serde(default)]
    pub target_entropy: Option<f64>,
    pub learn_alpha: bool,
    pub normalize_observations: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden_width: 256,
            hidden_layers: 2,
            batch_size: 256,
            gamma: 0.99,
            lr_q: 1e-4,
            lr_policy: 1e-4,
            lr_alpha: 1e-4,
            target_smoothing: 0.005,
            target_update_interval: 1,
            replay_capacity: 10_000_000,
            initial_alpha: 0.05,
            target_entropy: None,
            learn_alpha: true,
            normalize_observations: true,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::config("networks need at least one hidden layer of positive width"));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::config("batch size must be positive and fit in the replay store"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must lie in [0, 1)"));
        }
        if !(self.target_smoothing > 0.0 && self.target_smoothing <= 1.0) {
            return Err(Error::config("target_smoothing must lie in (0, 1]"));
        }
        if self.target_update_interval == 0 {
            return Err(Error::config("target_update_interval must be at least 1"));
        }
        for (name, lr) in [("lr_q", self.lr_q), ("lr_policy", self.lr_policy), ("lr_alpha", self.lr_alpha)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.initial_alpha > 0.0 && self.initial_alpha.is_finite()) {
            return Err(Error::config("initial_alpha must be positive"));
        }
        Ok(())
    }
}

/// Standard-normal draws for one update: `next` drives the Bellman target
/// action, `current` the reparameterised policy action. Both are batch × M.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNoise {
    pub next: Vec<f64>,
    pub current: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Mean of the two critics' squared Bellman residuals.
    pub j_q: f64,
    pub j_pi: f64,
    pub j_alpha: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
}

/// Critic losses and gradients for one batch.
#[derive(Debug, Clone)]
pub struct CriticGrad {
    pub j_q1: f64,
    pub j_q2: f64,
    pub grad_q1: Vec<f64>,
    pub grad_q2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorGrad {
    pub j_pi: f64,
    pub grad: Vec<f64>,
    pub mean_log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerCheckpoint {
    pub format_version: u32,
    pub config: SacConfig,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub policy: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub opt_policy: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub opt_alpha: Adam,
    pub norm: RunningNorm,
    pub rng: RngState,
    pub updates: u64,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct SacLearner {
    cfg: SacConfig,
    obs_dim: usize,
    act_dim: usize,
    policy: Mlp,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    log_alpha: f64,
    target_entropy: f64,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    norm: RunningNorm,
    rng: SimRng,
    updates: u64,
}

fn layer_sizes(input: usize, cfg: &SacConfig, output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(core::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
    s.push(output);
    s
}

impl SacLearner {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, streams::LEARNER);
        let policy = Mlp::new(&layer_sizes(obs_dim, &cfg, 2 * act_dim), &mut rng);
        let q_sizes = layer_sizes(obs_dim + act_dim, &cfg, 1);
        let q1 = Mlp::new(&q_sizes, &mut rng);
        let q2 = Mlp::new(&q_sizes, &mut rng);
        let target_entropy = cfg.target_entropy.unwrap_or(-(act_dim as f64));
        Ok(SacLearner {
            obs_dim,
            act_dim,
            opt_policy: Adam::new(policy.param_count(), cfg.lr_policy),
            opt_q1: Adam::new(q1.param_count(), cfg.lr_q),
            opt_q2: Adam::new(q2.param_count(), cfg.lr_q),
            opt_alpha: Adam::new(1, cfg.lr_alpha),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            log_alpha: ln(cfg.initial_alpha),
            target_entropy,
            norm: RunningNorm::new(obs_dim, cfg.normalize_observations),
            rng,
            updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn alpha(&self) -> f64 {
        exp(self.log_alpha)
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn set_log_alpha(&mut self, v: f64) {
        self.log_alpha = v;
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub fn critics_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.q1, &mut self.q2)
    }

    pub fn critics(&self) -> (&Mlp, &Mlp) {
        (&self.q1, &self.q2)
    }

    pub fn targets(&self) -> (&Mlp, &Mlp) {
        (&self.q1_target, &self.q2_target)
    }

    pub fn targets_mut(&mut self) -> (&mut Mlp, &mut Mlp) {
        (&mut self.q1_target, &mut self.q2_target)
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    pub fn normalizer(&self) -> &RunningNorm {
        &self.norm
    }

    /// Feeds an environment observation to the input standardiser.
    pub fn observe(&mut self, raw_obs: &[f64]) {
        self.norm.update(raw_obs);
    }

    fn normalize_rows(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; raw.len()];
        for (src, dst) in raw.chunks_exact(self.obs_dim).zip(out.chunks_exact_mut(self.obs_dim)) {
            self.norm.apply(src, dst);
        }
        out
    }

    /// Concatenates standardised observations with actions rescaled to `[-1, 1]`.
    fn critic_input(&self, norm_obs: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
        let (o, m) = (self.obs_dim, self.act_dim);
        let mut x = Vec::with_capacity(batch * (o + m));
        for b in 0..batch {
            x.extend_from_slice(&norm_obs[b * o..(b + 1) * o]);
            x.extend(actions[b * m..(b + 1) * m].iter().map(|a| (a - ACTION_MID) / ACTION_HALF));
        }
        x
    }

    /// Stochastic action for data collection.
    pub fn act(&mut self, raw_obs: &[f64]) -> Vec<f64> {
        let out = self.policy_head(raw_obs);
        (0..self.act_dim)
            .map(|d| {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                policy::sample_dim(out[d], out[self.act_dim + d], e).action
            })
            .collect()
    }

    /// `mid + half·tanh(μ)`, used for evaluation.
    pub fn act_deterministic(&self, raw_obs: &[f64]) -> Vec<f64> {
        let out = self.policy_head(raw_obs);
        out[..self.act_dim].iter().map(|&mu| policy::mean_action(mu)).collect()
    }

    fn policy_head(&self, raw_obs: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.obs_dim];
        self.norm.apply(raw_obs, &mut x);
        self.policy.predict(&x)
    }

    pub fn draw_noise(&mut self, batch: usize) -> PolicyNoise {
        let n = batch * self.act_dim;
        let next = (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let current = (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        PolicyNoise { next, current }
    }

    /// Samples actions for `batch` standardised observations with the given
    /// noise. Returns (actions, per-row log-prob, policy cache).
    fn sample_actions(&self, norm_obs: &[f64], batch: usize, noise: &[f64]) -> (Vec<f64>, Vec<f64>, MlpCache) {
        let m = self.act_dim;
        let mut cache = MlpCache::default();
        self.policy.forward(norm_obs, batch, &mut cache);
        let out = cache.output();
        let mut actions = vec![0.0; batch * m];
        let mut logp = vec![0.0; batch];
        for b in 0..batch {
            for d in 0..m {
                let s = policy::sample_dim(out[b * 2 * m + d], out[b * 2 * m + m + d], noise[b * m + d]);
                actions[b * m + d] = s.action;
                logp[b] += s.log_prob;
            }
        }
        (actions, logp, cache)
    }

    /// Soft Bellman targets `r + γ(1 − done)(min Q̄(s′, a′) − α log π(a′|s′))`.
    pub fn bellman_targets(&self, batch: &TransitionBatch, next_noise: &[f64]) -> Vec<f64> {
        let n = batch.len;
        let next = self.normalize_rows(&batch.next_obs);
        let (a_next, logp_next, _) = self.sample_actions(&next, n, next_noise);
        let x = self.critic_input(&next, &a_next, n);
        let (mut c1, mut c2) = (MlpCache::default(), MlpCache::default());
        self.q1_target.forward(&x, n, &mut c1);
        self.q2_target.forward(&x, n, &mut c2);
        let alpha = self.alpha();
        (0..n)
            .map(|b| {
                let q = c1.output()[b].min(c2.output()[b]);
                batch.reward[b] + self.cfg.gamma * (1.0 - batch.done[b]) * (q - alpha * logp_next[b])
            })
            .collect()
    }

    /// `J_Q(θ_i) = mean_b (Q_i(s, a) − y)²` and its gradients for both critics.
    pub fn critic_loss_and_grad(&self, batch: &TransitionBatch, next_noise: &[f64]) -> CriticGrad {
        let n = batch.len;
        let y = self.bellman_targets(batch, next_noise);
        let obs = self.normalize_rows(&batch.obs);
        let x = self.critic_input(&obs, &batch.action, n);
        let run = |net: &Mlp| {
            let mut c = MlpCache::default();
            net.forward(&x, n, &mut c);
            let resid: Vec<f64> = c.output().iter().zip(&y).map(|(q, t)| q - t).collect();
            let j = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
            let g_out: Vec<f64> = resid.iter().map(|r| 2.0 * r / n as f64).collect();
            let mut g = vec![0.0; net.param_count()];
            net.backward(&c, &g_out, Some(&mut g), None);
            (j, g)
        };
        let (j_q1, grad_q1) = run(&self.q1);
        let (j_q2, grad_q2) = run(&self.q2);
        CriticGrad { j_q1, j_q2, grad_q1, grad_q2 }
    }

    /// `J_π(φ) = mean_b (α log π(a_b|s_b) − min_i Q_i(s_b, a_b))` with
    /// reparameterised actions, and its gradient in the policy parameters.
    pub fn actor_loss_and_grad(&self, batch: &TransitionBatch, noise: &[f64]) -> ActorGrad {
        let (n, m, o) = (batch.len, self.act_dim, self.obs_dim);
        let obs = self.normalize_rows(&batch.obs);
        let (actions, logp, pcache) = self.sample_actions(&obs, n, noise);
        let x = self.critic_input(&obs, &actions, n);
        let (mut c1, mut c2) = (MlpCache::default(), MlpCache::default());
        self.q1.forward(&x, n, &mut c1);
        self.q2.forward(&x, n, &mut c2);
        let alpha = self.alpha();
        let inv_n = 1.0 / n as f64;

        let mut j = 0.0;
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        for b in 0..n {
            let (qa, qb) = (c1.output()[b], c2.output()[b]);
            // ties go to the first critic
            if qa <= qb {
                g1[b] = -inv_n;
            } else {
                g2[b] = -inv_n;
            }
            j += alpha * logp[b] - qa.min(qb);
        }
        j *= inv_n;

        // d(−Qmin/n)/d(critic input)
        let width = o + m;
        let mut gin1 = vec![0.0; n * width];
        let mut gin2 = vec![0.0; n * width];
        self.q1.backward(&c1, &g1, None, Some(&mut gin1));
        self.q2.backward(&c2, &g2, None, Some(&mut gin2));

        let out = pcache.output();
        let mut g_out = vec![0.0; n * 2 * m];
        for b in 0..n {
            for d in 0..m {
                let (mu, raw_ls, e) = (out[b * 2 * m + d], out[b * 2 * m + m + d], noise[b * m + d]);
                let s = policy::sample_dim(mu, raw_ls, e);
                // critic input holds (a − mid)/half, so d/da = d/dx / half
                let dq_da = (gin1[b * width + o + d] + gin2[b * width + o + d]) / ACTION_HALF;
                let da_du = ACTION_HALF * (1.0 - s.t * s.t);
                let dj_du = alpha * inv_n * policy::dlogp_du(s.t) + dq_da * da_du;
                g_out[b * 2 * m + d] = dj_du;
                if s.log_std_active {
                    g_out[b * 2 * m + m + d] = -alpha * inv_n + dj_du * s.sigma * e;
                }
            }
        }
        let mut grad = vec![0.0; self.policy.param_count()];
        self.policy.backward(&pcache, &g_out, Some(&mut grad), None);
        ActorGrad { j_pi: j, grad, mean_log_prob: logp.iter().sum::<f64>() * inv_n }
    }

    /// `J(α) = α·(−mean log π − H̄)`; returns the loss and `dJ/d log α`.
    pub fn temperature_loss_and_grad(&self, mean_log_prob: f64) -> (f64, f64) {
        let j = self.alpha() * (-mean_log_prob - self.target_entropy);
        (j, j)
    }

    /// One critic step, one actor step, one temperature step, and a target
    /// update when due.
    pub fn update(&mut self, batch: &TransitionBatch) -> Result<UpdateStats> {
        if batch.len == 0 {
            return Err(Error::contract("empty minibatch"));
        }
        let noise = self.draw_noise(batch.len);
        self.update_with_noise(batch, &noise)
    }

    pub fn update_with_noise(&mut self, batch: &TransitionBatch, noise: &PolicyNoise) -> Result<UpdateStats> {
        if batch.len == 0 {
            return Err(Error::contract("empty minibatch"));
        }
        let critic = self.critic_loss_and_grad(batch, &noise.next);
        if !(critic.j_q1.is_finite() && critic.j_q2.is_finite()) {
            return Err(Error::Numerical { context: "critic loss", sample: self.updates as usize });
        }
        self.opt_q1.step(self.q1.params_mut(), &critic.grad_q1);
        self.opt_q2.step(self.q2.params_mut(), &critic.grad_q2);

        let actor = self.actor_loss_and_grad(batch, &noise.current);
        if !actor.j_pi.is_finite() {
            return Err(Error::Numerical { context: "policy loss", sample: self.updates as usize });
        }
        self.opt_policy.step(self.policy.params_mut(), &actor.grad);

        let (j_alpha, g_alpha) = self.temperature_loss_and_grad(actor.mean_log_prob);
        if self.cfg.learn_alpha {
            let mut p = [self.log_alpha];
            self.opt_alpha.step(&mut p, &[g_alpha]);
            self.log_alpha = p[0];
        }

        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_update_interval as u64) {
            self.target_update();
        }
        Ok(UpdateStats {
            j_q: 0.5 * (critic.j_q1 + critic.j_q2),
            j_pi: actor.j_pi,
            j_alpha,
            alpha: self.alpha(),
            mean_log_prob: actor.mean_log_prob,
        })
    }

    /// `θ̄ ← ξθ + (1 − ξ)θ̄` for both critics.
    pub fn target_update(&mut self) {
        let xi = self.cfg.target_smoothing;
        self.q1_target.soft_update_from(&self.q1, xi);
        self.q2_target.soft_update_from(&self.q2, xi);
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite() && self.q1.is_finite() && self.q2.is_finite() && self.log_alpha.is_finite()
    }

    pub fn checkpoint(&self) -> LearnerCheckpoint {
        LearnerCheckpoint {
            format_version: CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            policy: self.policy.clone(),
            q1: self.q1.clone(),
            q2: self.q2.clone(),
            q1_target: self.q1_target.clone(),
            q2_target: self.q2_target.clone(),
            log_alpha: self.log_alpha,
            target_entropy: self.target_entropy,
            opt_policy: self.opt_policy.clone(),
            opt_q1: self.opt_q1.clone(),
            opt_q2: self.opt_q2.clone(),
            opt_alpha: self.opt_alpha.clone(),
            norm: self.norm.clone(),
            rng: RngState::capture(&self.rng),
            updates: self.updates,
        }
    }

    pub fn from_checkpoint(ck: LearnerCheckpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::contract(format!("unsupported learner checkpoint version {}", ck.format_version)));
        }
        ck.config.validate()?;
        let shapes_ok = ck.policy.input_dim() == ck.obs_dim
            && ck.policy.output_dim() == 2 * ck.act_dim
            && ck.q1.sizes() == ck.q2.sizes()
            && ck.q1.sizes() == ck.q1_target.sizes()
            && ck.q2.sizes() == ck.q2_target.sizes()
            && ck.q1.input_dim() == ck.obs_dim + ck.act_dim;
        if !shapes_ok {
            return Err(Error::contract("checkpoint network shapes are inconsistent"));
        }
        Ok(SacLearner {
            cfg: ck.config,
            obs_dim: ck.obs_dim,
            act_dim: ck.act_dim,
            policy: ck.policy,
            q1: ck.q1,
            q2: ck.q2,
            q1_target: ck.q1_target,
            q2_target: ck.q2_target,
            log_alpha: ck.log_alpha,
            target_entropy: ck.target_entropy,
            opt_policy: ck.opt_policy,
            opt_q1: ck.opt_q1,
            opt_q2: ck.opt_q2,
            opt_alpha: ck.opt_alpha,
            norm: ck.norm,
            rng: ck.rng.restore(),
            updates: ck.updates,
        })
    }
}
