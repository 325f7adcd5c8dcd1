//! The subcommands, as plain functions over a validated config.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use semtx_core::baselines::{self, OfflineInstance, OracleSolution, PlanScore};
use semtx_core::config::ExperimentConfig;
use semtx_core::env::{Environment, SlotRecord};
use semtx_core::eval::{self, EvalSummary};
use semtx_core::rng::{derived_seed, streams};
use semtx_core::sac::{self, EpochMetrics, SacLearner, TrainHooks};
use semtx_core::skb::World;
use semtx_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::files;
use crate::tables::{self, MetricsWriter, SweepRow};

pub const CONFIG_FILE: &str = "config.toml";
pub const WORLD_FILE: &str = "world.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const MENUS_FILE: &str = "menus.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn build_world(cfg: &ExperimentConfig) -> AppResult<Arc<World>> {
    Ok(Arc::new(World::generate(cfg.seed, &cfg.world)?))
}

pub fn build_env(cfg: &ExperimentConfig, world: Arc<World>) -> AppResult<Environment> {
    Ok(Environment::new(world, cfg.env_config())?)
}

/// Held-out scores of the trained policy and both greedy baselines on the
/// same evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub latency_budget_s: f64,
    pub tx_kb_size: usize,
    pub epochs: usize,
    pub env_steps: usize,
    pub drl: EvalSummary,
    pub loss_first: EvalSummary,
    pub latency_first: EvalSummary,
}

struct RunHooks {
    metrics: MetricsWriter,
    written: usize,
    checkpoint: PathBuf,
}

impl TrainHooks for RunHooks {
    fn on_epoch(&mut self, rows: &[EpochMetrics], learner: &SacLearner) -> semtx_core::Result<()> {
        let fresh = &rows[self.written..];
        self.metrics.append(fresh).map_err(|e| CoreError::Callback(e.to_string()))?;
        self.written = rows.len();
        files::write_learner(&self.checkpoint, learner).map_err(|e| CoreError::Callback(e.to_string()))
    }
}

/// Trains one learner and writes a self-contained run directory:
/// config snapshot, world, streamed metrics, checkpoint and summary.
///
/// On divergence the last good checkpoint is kept on disk and the error is
/// returned.
pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> AppResult<RunSummary> {
    cfg.validate()?;
    files::write_text(&out.join(CONFIG_FILE), &files::config_to_toml(cfg))?;
    let world = build_world(cfg)?;
    files::write_world(&out.join(WORLD_FILE), &world)?;
    let mut env = build_env(cfg, world)?;
    let mut learner = SacLearner::new(env.observation_width(), env.action_width(), cfg.sac.clone(), cfg.seed)?;

    let checkpoint = out.join(CHECKPOINT_FILE);
    files::write_learner(&checkpoint, &learner)?;
    let mut hooks = RunHooks { metrics: MetricsWriter::create(&out.join(METRICS_FILE))?, written: 0, checkpoint };
    let outcome = match sac::train(&mut env, &mut learner, &cfg.train, cfg.seed, &mut hooks) {
        Ok(o) => o,
        Err(e @ CoreError::Diverged { .. }) => {
            files::write_learner(&hooks.checkpoint, &learner)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };

    let seeds = sac::eval_episode_seeds(cfg.seed, cfg.train.eval_episodes);
    let summary = RunSummary {
        seed: cfg.seed,
        latency_budget_s: cfg.task.latency_budget_s,
        tx_kb_size: cfg.world.tx_kb_size,
        epochs: cfg.train.epochs,
        env_steps: outcome.env_steps,
        drl: outcome.final_eval,
        loss_first: eval::evaluate_loss_first(&mut env, &seeds)?,
        latency_first: eval::evaluate_latency_first(&mut env, &seeds)?,
    };
    files::write_json(&out.join(SUMMARY_FILE), &summary)?;
    write_eval_logs(cfg, &mut env, &learner, &seeds, out)?;
    Ok(summary)
}

/// Optional per-slot trace and menus of the trained policy on the
/// evaluation episodes.
fn write_eval_logs(
    cfg: &ExperimentConfig,
    env: &mut Environment,
    learner: &SacLearner,
    seeds: &[u64],
    out: &Path,
) -> AppResult<()> {
    if !cfg.logging.step_trace && !cfg.logging.menus {
        return Ok(());
    }
    let mut records: Vec<(usize, SlotRecord)> = Vec::new();
    let mut menus = Vec::new();
    eval::rollout(
        env,
        seeds,
        |obs| {
            if cfg.logging.menus {
                menus.push(obs.menus.clone());
            }
            let a = learner.act_deterministic(&obs.to_vec());
            semtx_core::env::decode_action(&a)
        },
        |ep, r| records.push((ep, r.clone())),
    )?;
    if cfg.logging.step_trace {
        tables::write_trace(&out.join(TRACE_FILE), &records)?;
    }
    if cfg.logging.menus {
        let rows: Vec<_> = menus.into_iter().zip(&records).map(|(m, (_, r))| (m, r.truth.clone())).collect();
        tables::write_menus(&out.join(MENUS_FILE), &rows)?;
    }
    Ok(())
}

/// Writes the world and the menus of the first evaluation episode.
pub fn run_gen_data(cfg: &ExperimentConfig, out: &Path) -> AppResult<()> {
    cfg.validate()?;
    files::write_text(&out.join(CONFIG_FILE), &files::config_to_toml(cfg))?;
    let world = build_world(cfg)?;
    files::write_world(&out.join(WORLD_FILE), &world)?;
    let mut env = build_env(cfg, world)?;
    let seed = sac::eval_episode_seeds(cfg.seed, 1)[0];
    let mut rows = Vec::new();
    env.reset(seed)?;
    while !env.is_done() {
        let menus = env.menus()?.to_vec();
        rows.push((menus, env.labels()?.to_vec()));
        let choice = vec![semtx_core::link::Level::Label; cfg.task.samples_per_slot];
        env.step_levels(&choice)?;
    }
    tables::write_menus(&out.join(MENUS_FILE), &rows)
}

/// Scores a saved learner on the evaluation episodes of `cfg`.
pub fn run_eval(cfg: &ExperimentConfig, world: Arc<World>, checkpoint: &Path) -> AppResult<RunSummary> {
    let learner = files::read_learner(checkpoint)?;
    let mut env = build_env(cfg, world)?;
    if learner.obs_dim() != env.observation_width() || learner.act_dim() != env.action_width() {
        return Err(AppError::Usage(format!(
            "checkpoint expects {} inputs, the config produces {}",
            learner.obs_dim(),
            env.observation_width()
        )));
    }
    let seeds = sac::eval_episode_seeds(cfg.seed, cfg.train.eval_episodes);
    Ok(RunSummary {
        seed: cfg.seed,
        latency_budget_s: cfg.task.latency_budget_s,
        tx_kb_size: cfg.world.tx_kb_size,
        epochs: cfg.train.epochs,
        env_steps: 0,
        drl: eval::evaluate_learner(&mut env, &learner, &seeds)?,
        loss_first: eval::evaluate_loss_first(&mut env, &seeds)?,
        latency_first: eval::evaluate_latency_first(&mut env, &seeds)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Latency budget, grid values in seconds.
    Tau,
    /// Transmitter knowledge-base size.
    Bt,
}

impl SweepAxis {
    pub fn parse(s: &str) -> AppResult<Self> {
        match s {
            "tau" => Ok(SweepAxis::Tau),
            "bt" => Ok(SweepAxis::Bt),
            other => Err(AppError::Usage(format!("unknown sweep axis {other:?}, expected tau or bt"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Tau => "tau",
            SweepAxis::Bt => "bt",
        }
    }

    pub fn default_grid(self, cfg: &ExperimentConfig) -> Vec<f64> {
        match self {
            SweepAxis::Tau => cfg.sweep.tau_grid_s.clone(),
            SweepAxis::Bt => cfg.sweep.tx_kb_grid.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> AppResult<ExperimentConfig> {
        match self {
            SweepAxis::Tau => Ok(cfg.with_budget(value)),
            SweepAxis::Bt => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(AppError::Usage(format!(
                        "knowledge-base size must be a positive integer, got {value}"
                    )));
                }
                Ok(cfg.with_tx_kb_size(value as usize))
            }
        }
    }
}

/// All per-seed summaries of a sweep plus the aggregated table.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<(f64, Vec<RunSummary>)>,
    pub rows: Vec<SweepRow>,
}

/// Trains and scores every grid point once per sweep seed. Each run lands in
/// `out/<axis>-<value>/seed-<seed>`; the combined table holds three rows per
/// point.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, grid: &[f64], out: &Path) -> AppResult<SweepOutcome> {
    if grid.is_empty() {
        return Err(AppError::Usage("sweep grid is empty".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut rows = Vec::with_capacity(3 * grid.len());
    for &value in grid {
        let point_cfg = axis.apply(cfg, value)?;
        point_cfg.validate()?;
        let mut runs = Vec::with_capacity(cfg.sweep.seeds.len());
        for &seed in &cfg.sweep.seeds {
            let dir = out.join(format!("{}-{value}", axis.name())).join(format!("seed-{seed}"));
            runs.push(run_train(&point_cfg.with_seed(seed), &dir)?);
        }
        rows.push(aggregate(value, "drl", runs.iter().map(|r| &r.drl)));
        rows.push(aggregate(value, "loss_first", runs.iter().map(|r| &r.loss_first)));
        rows.push(aggregate(value, "latency_first", runs.iter().map(|r| &r.latency_first)));
        points.push((value, runs));
    }
    tables::write_sweep(&out.join(SWEEP_FILE), &rows)?;
    Ok(SweepOutcome { points, rows })
}

fn aggregate<'a>(axis_value: f64, algorithm: &str, runs: impl Iterator<Item = &'a EvalSummary>) -> SweepRow {
    let runs: Vec<&EvalSummary> = runs.collect();
    let n = runs.len() as f64;
    let mean = |f: fn(&EvalSummary) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / n;
    let loss = mean(|r| r.avg_loss);
    let var =
        if runs.len() > 1 { runs.iter().map(|r| (r.avg_loss - loss).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    SweepRow {
        axis_value,
        algorithm: algorithm.into(),
        avg_sem_loss: loss,
        avg_latency: mean(|r| r.avg_latency),
        accuracy: mean(|r| r.accuracy),
        sem_loss_std: var.sqrt(),
        runs: runs.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum OracleOutcome {
    Solved { optimum: OracleSolution },
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Episode seed the instance was recorded from, if generated.
    pub instance_seed: Option<u64>,
    pub budget_s: f64,
    pub slots: usize,
    pub samples_per_slot: usize,
    #[serde(flatten)]
    pub outcome: OracleOutcome,
    pub loss_first: PlanScore,
    pub latency_first: PlanScore,
}

/// Records `slots` slots of a held-out episode of `cfg`.
pub fn generate_instance(cfg: &ExperimentConfig, slots: usize) -> AppResult<(OfflineInstance, u64)> {
    let world = build_world(cfg)?;
    let mut env = build_env(cfg, world)?;
    let seed = derived_seed(cfg.seed, streams::ORACLE, 0);
    Ok((OfflineInstance::from_environment(&mut env, seed, slots)?, seed))
}

/// Solves an instance and replays both greedy policies on it. An
/// infeasible budget yields a report; an exceeded cap is an error.
pub fn run_oracle(
    cfg: &ExperimentConfig,
    inst: &OfflineInstance,
    instance_seed: Option<u64>,
) -> AppResult<OracleReport> {
    let outcome = match baselines::offline_optimum(inst, &cfg.oracle) {
        Ok(optimum) => OracleOutcome::Solved { optimum },
        Err(CoreError::Infeasible(reason)) => OracleOutcome::Infeasible { reason },
        Err(e) => return Err(e.into()),
    };
    Ok(OracleReport {
        instance_seed,
        budget_s: inst.budget_s,
        slots: inst.slots.len(),
        samples_per_slot: inst.samples_per_slot(),
        outcome,
        loss_first: inst.run_loss_first(),
        latency_first: inst.run_latency_first(),
    })
}
