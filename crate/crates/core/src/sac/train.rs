use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ReplayStore, SacLearner, Transition, TransitionBatch};
use crate::env::{Environment, SlotRecord, ACTION_HIGH, ACTION_LOW};
use crate::eval::{self, EvalSummary};
use crate::rng::{derived_seed, stream_rng, streams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Environment steps taken with uniform random actions before learning.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    /// Held-out episodes scored with the deterministic policy after every epoch.
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, steps_per_epoch: 1000, warmup_steps: 1000, updates_per_step: 1, eval_episodes: 5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_epoch == 0 {
            return Err(Error::config("steps_per_epoch must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One row of the metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    pub mean_reward: f64,
    pub mean_sem_loss: f64,
    pub mean_latency: f64,
    pub accuracy: f64,
    pub alpha: f64,
    pub j_q: f64,
    pub j_pi: f64,
}

/// Callbacks for persistence and tracing. All methods default to no-ops.
pub trait TrainHooks {
    /// Called after each epoch with the rows produced so far.
    fn on_epoch(&mut self, _rows: &[EpochMetrics], _learner: &SacLearner) -> Result<()> {
        Ok(())
    }

    fn on_train_step(&mut self, _record: &SlotRecord) {}
}

impl TrainHooks for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub final_eval: EvalSummary,
    pub env_steps: usize,
}

/// The seeds of the held-out evaluation episodes for an experiment seed.
pub fn eval_episode_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| derived_seed(seed, streams::EVAL_EPISODES, k)).collect()
}

/// Runs soft actor-critic on `env`.
///
/// Each environment step is followed by `updates_per_step` gradient updates
/// once the warm-up is over. Training episodes draw their seeds from the
/// experiment seed; evaluation uses a disjoint, fixed set of episodes. On a
/// non-finite loss the learner is rolled back to the state at the end of the
/// last completed epoch and [`Error::Diverged`] is returned.
pub fn train(
    env: &mut Environment,
    learner: &mut SacLearner,
    cfg: &TrainConfig,
    seed: u64,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if env.observation_width() != learner.obs_dim() || env.action_width() != learner.act_dim() {
        return Err(Error::contract("learner dimensions do not match the environment"));
    }
    let (obs_dim, act_dim) = (learner.obs_dim(), learner.act_dim());
    let sac = learner.config().clone();
    let mut replay = ReplayStore::new(sac.replay_capacity, obs_dim, act_dim);
    let mut batch = TransitionBatch::default();
    let mut sample_rng = stream_rng(seed, streams::TRAIN_EPISODES);
    let eval_seeds = eval_episode_seeds(seed, cfg.eval_episodes);

    let mut episode = 0u64;
    let mut obs = env.reset(derived_seed(seed, streams::TRAIN_EPISODES, episode))?.to_vec();
    learner.observe(&obs);
    let mut metrics = Vec::with_capacity(2 * cfg.epochs);
    let mut env_steps = 0usize;
    let mut last_good = learner.clone();

    for epoch in 1..=cfg.epochs {
        let (mut sum_r, mut sum_l, mut sum_t, mut correct, mut decisions) = (0.0, 0.0, 0.0, 0usize, 0usize);
        let (mut sum_jq, mut sum_jpi, mut n_upd) = (0.0, 0.0, 0usize);

        for _ in 0..cfg.steps_per_epoch {
            let action: Vec<f64> = if env_steps < cfg.warmup_steps {
                (0..act_dim).map(|_| sample_rng.random_range(ACTION_LOW..=ACTION_HIGH)).collect()
            } else {
                learner.act(&obs)
            };
            let out = env.step(&action)?;
            hooks.on_train_step(&out.record);
            let next = out.observation.to_vec();
            replay.push(Transition {
                obs: &obs,
                action: &action,
                reward: out.reward.total,
                next_obs: &next,
                done: out.done,
            });
            env_steps += 1;

            sum_r += out.reward.total;
            for k in 0..out.record.levels.len() {
                sum_l += out.record.losses[k];
                sum_t += out.record.latencies[k];
                correct += usize::from(out.record.predicted[k] == out.record.truth[k]);
                decisions += 1;
            }

            if out.done {
                episode += 1;
                obs = env.reset(derived_seed(seed, streams::TRAIN_EPISODES, episode))?.to_vec();
            } else {
                obs = next;
            }
            learner.observe(&obs);

            if env_steps > cfg.warmup_steps && replay.len() >= sac.batch_size {
                for _ in 0..cfg.updates_per_step {
                    replay.sample(sac.batch_size, &mut sample_rng, &mut batch)?;
                    match learner.update(&batch) {
                        Ok(stats) => {
                            sum_jq += stats.j_q;
                            sum_jpi += stats.j_pi;
                            n_upd += 1;
                        }
                        Err(Error::Numerical { context, .. }) => {
                            *learner = last_good;
                            return Err(Error::Diverged { epoch, reason: String::from(context) });
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if !learner.is_finite() {
            *learner = last_good;
            return Err(Error::Diverged { epoch, reason: String::from("non-finite parameters") });
        }

        let steps = cfg.steps_per_epoch as f64;
        let (j_q, j_pi) = if n_upd > 0 { (sum_jq / n_upd as f64, sum_jpi / n_upd as f64) } else { (0.0, 0.0) };
        let alpha = learner.alpha();
        metrics.push(EpochMetrics {
            epoch,
            phase: Phase::Train,
            mean_reward: sum_r / steps,
            mean_sem_loss: sum_l / decisions as f64,
            mean_latency: sum_t / decisions as f64,
            accuracy: correct as f64 / decisions as f64,
            alpha,
            j_q,
            j_pi,
        });

        let mut eval_env = env.clone();
        let ev = eval::evaluate_learner(&mut eval_env, learner, &eval_seeds)?;
        if !ev.mean_reward.is_finite() {
            *learner = last_good;
            return Err(Error::Diverged { epoch, reason: format!("evaluation reward {}", ev.mean_reward) });
        }
        metrics.push(EpochMetrics {
            epoch,
            phase: Phase::Eval,
            mean_reward: ev.mean_reward,
            mean_sem_loss: ev.avg_loss,
            mean_latency: ev.avg_latency,
            accuracy: ev.accuracy,
            alpha,
            j_q,
            j_pi,
        });
        hooks.on_epoch(&metrics, learner)?;
        last_good = learner.clone();
    }

    let mut eval_env = env.clone();
    let final_eval = eval::evaluate_learner(&mut eval_env, learner, &eval_seeds)?;
    Ok(TrainOutcome { metrics, final_eval, env_steps })
}
