//! The slot-by-slot decision process.
//!
//! Each slot the transmitter sees `M` fresh samples at the current distance,
//! picks one feature level per sample, and is rewarded with the negative mean
//! semantic loss minus a latency penalty. The penalty branch depends on the
//! running mean latency `T_avg` of all earlier decisions in the episode
//! (0 before the first decision): above the budget `τ` every sample pays for
//! the airtime it spent beyond the cheapest level; at or below the budget
//! every sample pays for the unused budget `τ - T_avg`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, MobilityConfig, MobilityState};
use crate::link::{self, Level, LevelMenu, TransmissionChoice};
use crate::rng::{stream_rng, streams, SimRng};
use crate::skb::{ClassId, SampleBatch, SampleGenerator, World};
use crate::{Error, Result};

/// Lower edge of the continuous action range.
pub const ACTION_LOW: f64 = 0.5;
/// Upper edge of the continuous action range.
pub const ACTION_HIGH: f64 = 4.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub samples_per_slot: usize,
    pub latency_budget_s: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub horizon_slots: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { samples_per_slot: 1, latency_budget_s: 3e-3, kappa1: 500.0, kappa2: 500.0, horizon_slots: 500 }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_slot == 0 {
            return Err(Error::config("samples_per_slot must be at least 1"));
        }
        if self.horizon_slots == 0 {
            return Err(Error::config("horizon_slots must be at least 1"));
        }
        if !(self.latency_budget_s >= 0.0 && self.latency_budget_s.is_finite()) {
            return Err(Error::config("latency budget must be finite and non-negative"));
        }
        if !(self.kappa1 >= 0.0 && self.kappa2 >= 0.0) {
            return Err(Error::config("penalty weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: TaskConfig,
    pub channel: ChannelParams,
    pub mobility: MobilityConfig,
}

/// Maps a continuous action to a level: `[0.5,1.5)`, `[1.5,2.5)`,
/// `[2.5,3.5)`, `[3.5,4.5]`. Values outside the range are clamped first.
pub fn decode_level(raw: f64) -> Level {
    let x = if raw.is_nan() { ACTION_LOW } else { raw.clamp(ACTION_LOW, ACTION_HIGH) };
    if x < 1.5 {
        Level::Visual
    } else if x < 2.5 {
        Level::Intermediate
    } else if x < 3.5 {
        Level::Semantic
    } else {
        Level::Label
    }
}

pub fn decode_action(raw: &[f64]) -> TransmissionChoice {
    raw.iter().map(|&x| decode_level(x)).collect()
}

/// Centre of the bin that decodes to `level`.
pub fn encode_level(level: Level) -> f64 {
    f64::from(level.number())
}

/// What the agent sees at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub menus: Vec<LevelMenu>,
    pub avg_loss: f64,
    pub avg_latency: f64,
    pub velocity: f64,
    /// 1-based.
    pub slot: usize,
    pub horizon: usize,
}

impl Observation {
    pub fn width(samples_per_slot: usize) -> usize {
        8 * samples_per_slot + 4
    }

    /// `(L_{m,l}, T_{m,l})` for every sample and level, then `L_avg`, `T_avg`,
    /// velocity and `slot / horizon`.
    pub fn write_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), Observation::width(self.menus.len()));
        let mut k = 0;
        for menu in &self.menus {
            for l in 0..4 {
                out[k] = menu.loss[l];
                out[k + 1] = menu.latency[l];
                k += 2;
            }
        }
        out[k] = self.avg_loss;
        out[k + 1] = self.avg_latency;
        out[k + 2] = self.velocity;
        out[k + 3] = self.slot as f64 / self.horizon as f64;
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = alloc::vec![0.0; Observation::width(self.menus.len())];
        self.write_into(&mut v);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub loss_term: f64,
    /// Over-budget penalty, averaged over the slot's samples.
    pub y1: f64,
    /// Under-budget penalty, averaged over the slot's samples.
    pub y2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub total: f64,
}

/// Reward for one slot given the running mean latency before the slot.
pub fn reward(menus: &[LevelMenu], choice: &[Level], avg_latency: f64, task: &TaskConfig) -> RewardBreakdown {
    let m = menus.len() as f64;
    let tau = task.latency_budget_s;
    let over = avg_latency > tau;
    let (mut loss, mut y1, mut y2) = (0.0, 0.0, 0.0);
    for (menu, &level) in menus.iter().zip(choice) {
        loss += menu.loss_of(level);
        if over {
            y1 += menu.latency_of(level) - menu.min_latency();
        } else {
            y2 += tau - avg_latency;
        }
    }
    let (loss, y1, y2) = (loss / m, y1 / m, y2 / m);
    RewardBreakdown {
        loss_term: loss,
        y1,
        y2,
        kappa1: task.kappa1,
        kappa2: task.kappa2,
        total: -loss - task.kappa1 * y1 - task.kappa2 * y2,
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub distance: f64,
    pub rate: f64,
    pub levels: TransmissionChoice,
    pub losses: Vec<f64>,
    pub latencies: Vec<f64>,
    pub predicted: Vec<ClassId>,
    pub truth: Vec<ClassId>,
    /// Running mean latency the reward was computed against.
    pub avg_latency_before: f64,
    /// Running means including this slot.
    pub avg_loss_after: f64,
    pub avg_latency_after: f64,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub record: SlotRecord,
}

#[derive(Debug, Clone)]
struct Episode {
    mobility_rng: SimRng,
    samples: SampleGenerator,
    mobility: MobilityState,
    rate: f64,
    batch: SampleBatch,
    menus: Vec<LevelMenu>,
    sum_loss: f64,
    sum_latency: f64,
    decisions: usize,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    world: Arc<World>,
    cfg: EnvConfig,
    episode: Option<Episode>,
}

impl Environment {
    pub fn new(world: Arc<World>, cfg: EnvConfig) -> Result<Self> {
        cfg.task.validate()?;
        cfg.channel.validate()?;
        cfg.mobility.validate()?;
        Ok(Environment { world, cfg, episode: None })
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn observation_width(&self) -> usize {
        Observation::width(self.cfg.task.samples_per_slot)
    }

    pub fn action_width(&self) -> usize {
        self.cfg.task.samples_per_slot
    }

    /// Starts a new episode. Mobility and samples are driven by `seed` alone,
    /// never by the actions taken.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let mut mobility_rng = stream_rng(seed, streams::EPISODE_MOBILITY);
        let mobility = MobilityState::start(&self.cfg.mobility, &mut mobility_rng);
        let samples = SampleGenerator::from_rng(stream_rng(seed, streams::EPISODE_SAMPLES));
        let mut ep = Episode {
            mobility_rng,
            samples,
            mobility,
            rate: 0.0,
            batch: SampleBatch { features: Vec::new(), labels: Vec::new() },
            menus: Vec::new(),
            sum_loss: 0.0,
            sum_latency: 0.0,
            decisions: 0,
            done: false,
        };
        self.refresh_slot(&mut ep)?;
        let obs = self.observe(&ep);
        self.episode = Some(ep);
        Ok(obs)
    }

    fn refresh_slot(&self, ep: &mut Episode) -> Result<()> {
        ep.rate = channel::rate(&self.cfg.channel, ep.mobility.distance)?;
        ep.batch = ep.samples.sample_batch(&self.world, self.cfg.task.samples_per_slot, None)?;
        let w = &*self.world;
        ep.menus = ep
            .batch
            .features
            .iter()
            .enumerate()
            .map(|(m, v)| link::build_menu(v, &w.tx, &w.rx, &w.kb, ep.rate, self.cfg.channel.quantization_bits, m))
            .collect::<Result<_>>()?;
        Ok(())
    }

    fn observe(&self, ep: &Episode) -> Observation {
        Observation {
            menus: ep.menus.clone(),
            avg_loss: mean_or_zero(ep.sum_loss, ep.decisions),
            avg_latency: mean_or_zero(ep.sum_latency, ep.decisions),
            velocity: ep.mobility.velocity,
            slot: ep.mobility.slot as usize,
            horizon: self.cfg.task.horizon_slots,
        }
    }

    fn active(&self) -> Result<&Episode> {
        match &self.episode {
            Some(ep) if !ep.done => Ok(ep),
            Some(_) => Err(Error::contract("episode finished; call reset")),
            None => Err(Error::contract("environment not reset")),
        }
    }

    pub fn menus(&self) -> Result<&[LevelMenu]> {
        Ok(&self.active()?.menus)
    }

    pub fn labels(&self) -> Result<&[ClassId]> {
        Ok(&self.active()?.batch.labels)
    }

    /// Running mean latency of all decisions so far (0 before the first).
    pub fn avg_latency(&self) -> Result<f64> {
        let ep = self.active()?;
        Ok(mean_or_zero(ep.sum_latency, ep.decisions))
    }

    pub fn avg_loss(&self) -> Result<f64> {
        let ep = self.active()?;
        Ok(mean_or_zero(ep.sum_loss, ep.decisions))
    }

    pub fn observation(&self) -> Result<Observation> {
        Ok(self.observe(self.active()?))
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|ep| ep.done)
    }

    /// Decodes a continuous action and applies it.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let choice = decode_action(action);
        self.step_levels(&choice)
    }

    pub fn step_levels(&mut self, choice: &[Level]) -> Result<StepOutcome> {
        let mut ep = match self.episode.take() {
            Some(ep) if !ep.done => ep,
            other => {
                self.episode = other;
                return Err(Error::contract("step called on a finished or unstarted episode"));
            }
        };
        if choice.len() != ep.menus.len() {
            let msg = format!("action has {} entries, slot has {} samples", choice.len(), ep.menus.len());
            self.episode = Some(ep);
            return Err(Error::contract(msg));
        }

        let before = mean_or_zero(ep.sum_latency, ep.decisions);
        let reward = reward(&ep.menus, choice, before, &self.cfg.task);
        let mut losses = Vec::with_capacity(choice.len());
        let mut latencies = Vec::with_capacity(choice.len());
        let mut predicted = Vec::with_capacity(choice.len());
        for (menu, &level) in ep.menus.iter().zip(choice) {
            losses.push(menu.loss_of(level));
            latencies.push(menu.latency_of(level));
            predicted.push(menu.predicted_by(level));
            ep.sum_loss += menu.loss_of(level);
            ep.sum_latency += menu.latency_of(level);
            ep.decisions += 1;
        }
        let slot = ep.mobility.slot as usize;
        let record = SlotRecord {
            slot,
            distance: ep.mobility.distance,
            rate: ep.rate,
            levels: choice.to_vec(),
            losses,
            latencies,
            predicted,
            truth: ep.batch.labels.clone(),
            avg_latency_before: before,
            avg_loss_after: mean_or_zero(ep.sum_loss, ep.decisions),
            avg_latency_after: mean_or_zero(ep.sum_latency, ep.decisions),
            reward,
        };

        ep.done = slot >= self.cfg.task.horizon_slots;
        ep.mobility = channel::step_mobility(&ep.mobility, &self.cfg.mobility, &mut ep.mobility_rng);
        if let Err(e) = self.refresh_slot(&mut ep) {
            self.episode = Some(ep);
            return Err(e);
        }
        let observation = self.observe(&ep);
        let done = ep.done;
        self.episode = Some(ep);
        Ok(StepOutcome { observation, reward, done, record })
    }
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::skb::WorldConfig;
    use rand::Rng;

    fn env_with(task: TaskConfig) -> Environment {
        let world = Arc::new(World::generate(1, &WorldConfig::default()).unwrap());
        let cfg = EnvConfig { task, channel: ChannelConfig::default().params(), mobility: MobilityConfig::default() };
        Environment::new(world, cfg).unwrap()
    }

    fn menu(loss: [f64; 4], latency: [f64; 4]) -> LevelMenu {
        LevelMenu { loss, latency, predicted: [0; 4] }
    }

    #[test]
    fn bin_edges() {
        assert_eq!(decode_level(0.5), Level::Visual);
        assert_eq!(decode_level(1.4999), Level::Visual);
        assert_eq!(decode_level(1.5), Level::Intermediate);
        assert_eq!(decode_level(2.4999), Level::Intermediate);
        assert_eq!(decode_level(2.5), Level::Semantic);
        assert_eq!(decode_level(3.5), Level::Label);
        assert_eq!(decode_level(4.5), Level::Label);
        assert_eq!(decode_level(4.5 + 1e-12), Level::Label);
        assert_eq!(decode_level(0.5 - 1e-12), Level::Visual);
        for l in Level::ALL {
            assert_eq!(decode_level(encode_level(l)), l);
        }
    }

    #[test]
    fn budget_exactly_met_takes_under_branch_with_zero_penalty() {
        let task = TaskConfig { latency_budget_s: 0.004, ..TaskConfig::default() };
        let r = reward(&[menu([0.5, 0.1, 0.1, 0.1], [0.01, 0.002, 0.003, 0.001])], &[Level::Visual], 0.004, &task);
        assert_eq!(r.y1, 0.0);
        assert_eq!(r.y2, 0.0);
        assert_eq!(r.total, -0.5);
    }

    #[test]
    fn over_budget_cheapest_level_costs_only_loss() {
        let task = TaskConfig::default();
        let r = reward(&[menu([0.1, 0.2, 0.3, 0.7], [0.01, 0.002, 0.003, 0.001])], &[Level::Label], 0.005, &task);
        assert_eq!(r.y1, 0.0);
        assert_eq!(r.y2, 0.0);
        assert_eq!(r.total, -0.7);
    }

    #[test]
    fn under_budget_penalty_plug_in() {
        // -0.2 - 500 * 1e-3 = -0.7
        let task = TaskConfig { latency_budget_s: 0.003, ..TaskConfig::default() };
        let r = reward(&[menu([0.2, 0.2, 0.2, 0.2], [0.01, 0.002, 0.003, 0.001])], &[Level::Semantic], 0.002, &task);
        let expected = -0.2 - 500.0 * (0.003 - 0.002);
        assert!((r.total - expected).abs() < 1e-15);
        assert!((r.total + 0.7).abs() < 1e-12);
    }

    #[test]
    fn over_budget_penalises_extra_airtime() {
        let task = TaskConfig::default();
        let r = reward(&[menu([0.1, 0.2, 0.3, 0.7], [0.01, 0.002, 0.003, 0.001])], &[Level::Visual], 0.004, &task);
        assert!((r.y1 - 0.009).abs() < 1e-15);
        assert!((r.total - (-0.1 - 500.0 * 0.009)).abs() < 1e-12);
    }

    #[test]
    fn reset_is_reproducible_and_starts_clean() {
        let mut env = env_with(TaskConfig::default());
        let a = env.reset(5).unwrap();
        let b = env.reset(5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.avg_loss, 0.0);
        assert_eq!(a.avg_latency, 0.0);
        assert_eq!(a.slot, 1);
        assert_eq!(a.to_vec().len(), 12);
    }

    #[test]
    fn step_after_done_is_contract_error() {
        let mut env = env_with(TaskConfig { horizon_slots: 3, ..TaskConfig::default() });
        env.reset(1).unwrap();
        for i in 0..3 {
            let out = env.step(&[4.0]).unwrap();
            assert_eq!(out.done, i == 2);
        }
        assert!(matches!(env.step(&[4.0]), Err(Error::Contract(_))));
        assert!(env.is_done());
    }

    #[test]
    fn step_before_reset_is_contract_error() {
        let mut env = env_with(TaskConfig::default());
        assert!(matches!(env.step(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn observation_matches_recomputed_fields() {
        let mut env = env_with(TaskConfig { samples_per_slot: 3, ..TaskConfig::default() });
        let mut obs = env.reset(9).unwrap();
        let mut rng = stream_rng(0, 0);
        let (mut sl, mut st, mut n) = (0.0, 0.0, 0usize);
        for slot in 1..=40 {
            let v = obs.to_vec();
            assert_eq!(v.len(), 28);
            let rate = channel::rate(&env.config().channel, obs_distance(&env)).unwrap();
            let labels = env.labels().unwrap().to_vec();
            assert_eq!(labels.len(), 3);
            for (m, menu) in obs.menus.iter().enumerate() {
                for l in 0..4 {
                    assert_eq!(v[8 * m + 2 * l], menu.loss[l]);
                    assert_eq!(v[8 * m + 2 * l + 1], menu.latency[l]);
                }
                let dims = [256.0, 16.0, 32.0, 1.0];
                for l in 0..4 {
                    assert!((menu.latency[l] - dims[l] * 32.0 / rate).abs() < 1e-15);
                }
            }
            assert!((v[24] - if n == 0 { 0.0 } else { sl / n as f64 }).abs() < 1e-12);
            assert!((v[25] - if n == 0 { 0.0 } else { st / n as f64 }).abs() < 1e-12);
            assert_eq!(v[27], slot as f64 / 500.0);
            let action: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..4.5)).collect();
            let out = env.step(&action).unwrap();
            for k in 0..3 {
                sl += out.record.losses[k];
                st += out.record.latencies[k];
                n += 1;
            }
            obs = out.observation;
        }
    }

    fn obs_distance(env: &Environment) -> f64 {
        env.episode.as_ref().unwrap().mobility.distance
    }

    #[test]
    fn penalties_exclusive_and_reward_non_positive() {
        let mut env = env_with(TaskConfig { latency_budget_s: 1e-3, ..TaskConfig::default() });
        env.reset(2).unwrap();
        let mut rng = stream_rng(8, 0);
        for _ in 0..499 {
            let out = env.step(&[rng.random_range(0.5..4.5)]).unwrap();
            assert_eq!(out.reward.y1 * out.reward.y2, 0.0);
            assert!(out.reward.total <= 0.0);
        }
    }

    #[test]
    fn exogenous_sequence_ignores_actions() {
        let mut a = env_with(TaskConfig::default());
        let mut b = env_with(TaskConfig::default());
        a.reset(4).unwrap();
        b.reset(4).unwrap();
        for _ in 0..30 {
            let ra = a.step(&[1.0]).unwrap();
            let rb = b.step(&[4.0]).unwrap();
            assert_eq!(ra.observation.menus, rb.observation.menus);
            assert_eq!(ra.record.truth, rb.record.truth);
        }
    }

    #[test]
    fn wrong_action_width_rejected_without_losing_episode() {
        let mut env = env_with(TaskConfig::default());
        env.reset(1).unwrap();
        assert!(env.step(&[1.0, 2.0]).is_err());
        assert!(env.step(&[1.0]).is_ok());
    }
}
