//! Scoring policies on held-out episodes.
//!
//! Every policy sees the same episodes for the same seeds, since mobility and
//! samples never depend on the actions taken.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::env::{Environment, Observation, SlotRecord};
use crate::link::{Level, TransmissionChoice};
use crate::sac::SacLearner;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean semantic loss over all decisions.
    pub avg_loss: f64,
    /// Mean latency over all decisions, in seconds.
    pub avg_latency: f64,
    pub accuracy: f64,
    /// Mean per-slot reward.
    pub mean_reward: f64,
    pub episodes: usize,
    pub slots: usize,
}

/// Runs one full episode per seed with `policy` choosing the levels.
/// `trace` sees every slot with the episode index.
pub fn rollout(
    env: &mut Environment,
    seeds: &[u64],
    mut policy: impl FnMut(&Observation) -> TransmissionChoice,
    mut trace: impl FnMut(usize, &SlotRecord),
) -> Result<EvalSummary> {
    let (mut sum_l, mut sum_t, mut sum_r) = (0.0, 0.0, 0.0);
    let (mut correct, mut decisions, mut slots) = (0usize, 0usize, 0usize);
    for (ep, &seed) in seeds.iter().enumerate() {
        let mut obs = env.reset(seed)?;
        loop {
            let choice = policy(&obs);
            let out = env.step_levels(&choice)?;
            trace(ep, &out.record);
            let r = &out.record;
            for k in 0..r.levels.len() {
                sum_l += r.losses[k];
                sum_t += r.latencies[k];
                correct += usize::from(r.predicted[k] == r.truth[k]);
                decisions += 1;
            }
            sum_r += out.reward.total;
            slots += 1;
            if out.done {
                break;
            }
            obs = out.observation;
        }
    }
    let d = decisions.max(1) as f64;
    Ok(EvalSummary {
        avg_loss: sum_l / d,
        avg_latency: sum_t / d,
        accuracy: correct as f64 / d,
        mean_reward: sum_r / slots.max(1) as f64,
        episodes: seeds.len(),
        slots,
    })
}

/// The learner's deterministic policy `mid + half·tanh(μ)`.
pub fn evaluate_learner(env: &mut Environment, learner: &SacLearner, seeds: &[u64]) -> Result<EvalSummary> {
    let mut buf = Vec::new();
    rollout(
        env,
        seeds,
        |obs| {
            buf.resize(Observation::width(obs.menus.len()), 0.0);
            obs.write_into(&mut buf);
            crate::env::decode_action(&learner.act_deterministic(&buf))
        },
        |_, _| {},
    )
}

pub fn loss_first_choice(obs: &Observation, budget: f64) -> TransmissionChoice {
    obs.menus.iter().map(|m| baselines::loss_first(m, obs.avg_latency, budget)).collect()
}

pub fn latency_first_choice(obs: &Observation) -> TransmissionChoice {
    obs.menus.iter().map(baselines::latency_first).collect()
}

pub fn evaluate_loss_first(env: &mut Environment, seeds: &[u64]) -> Result<EvalSummary> {
    let budget = env.config().task.latency_budget_s;
    rollout(env, seeds, |obs| loss_first_choice(obs, budget), |_, _| {})
}

pub fn evaluate_latency_first(env: &mut Environment, seeds: &[u64]) -> Result<EvalSummary> {
    rollout(env, seeds, latency_first_choice, |_, _| {})
}

/// Always the same level, handy for bounding results.
pub fn evaluate_fixed(env: &mut Environment, seeds: &[u64], level: Level) -> Result<EvalSummary> {
    rollout(env, seeds, |obs| alloc::vec![level; obs.menus.len()], |_, _| {})
}
