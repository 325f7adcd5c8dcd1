//! The experiment configuration tree.
//!
//! Every key carries its unit (`_hz`, `_dbm`, `_db`, `_m`, `_s`, `_bits`) and
//! unknown keys are rejected, so a typo cannot silently fall back to a default.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::OracleConfig;
use crate::channel::{self, ChannelConfig, MobilityConfig};
use crate::env::{EnvConfig, TaskConfig};
use crate::sac::{SacConfig, TrainConfig};
use crate::skb::WorldConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Latency budgets for the `tau` axis, in seconds.
    pub tau_grid_s: Vec<f64>,
    /// Transmitter knowledge-base sizes for the `bt` axis.
    pub tx_kb_grid: Vec<usize>,
    /// Every grid point is trained and scored once per seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tau_grid_s: vec![3e-3, 8e-3, 13e-3, 18e-3, 23e-3, 28e-3],
            tx_kb_grid: (2..=10).collect(),
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingConfig {
    /// Write a per-slot trace of evaluation episodes.
    pub step_trace: bool,
    /// Write the per-sample level menus of evaluation episodes.
    pub menus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub world: WorldConfig,
    pub channel: ChannelConfig,
    pub mobility: MobilityConfig,
    pub task: TaskConfig,
    pub sac: SacConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub oracle: OracleConfig,
    #[serde(default)]
    pub logging: LoggingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: String::from("runs"),
            world: WorldConfig::default(),
            channel: ChannelConfig::default(),
            mobility: MobilityConfig::default(),
            task: TaskConfig::default(),
            sac: SacConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            oracle: OracleConfig::default(),
            logging: LoggingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig { task: self.task.clone(), channel: self.channel.params(), mobility: self.mobility.clone() }
    }

    /// Slowest label transmission: `Q / R(d_max)`.
    pub fn worst_label_latency(&self) -> Result<f64> {
        let p = self.channel.params();
        Ok(p.quantization_bits / channel::rate(&p, self.mobility.max_distance_m)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.channel.params().validate()?;
        self.mobility.validate()?;
        self.task.validate()?;
        self.sac.validate()?;
        self.train.validate()?;
        self.oracle.validate()?;

        // Sending the label must always fit, otherwise no policy can meet the budget.
        let worst = self.worst_label_latency()?;
        let check = |tau: f64, what: &str| -> Result<()> {
            if worst > tau {
                return Err(Error::Config(format!(
                    "{what} {tau} s is below the label latency at maximum distance ({worst:.3e} s)"
                )));
            }
            Ok(())
        };
        check(self.task.latency_budget_s, "latency_budget_s")?;
        for &tau in &self.sweep.tau_grid_s {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::config("sweep budgets must be finite and non-negative"));
            }
            check(tau, "sweep budget")?;
        }
        for &n in &self.sweep.tx_kb_grid {
            let mut w = self.world.clone();
            w.tx_kb_size = n;
            w.validate()?;
        }
        if self.sweep.seeds.is_empty() {
            return Err(Error::config("sweep needs at least one seed"));
        }
        Ok(())
    }

    pub fn with_budget(&self, tau: f64) -> Self {
        let mut c = self.clone();
        c.task.latency_budget_s = tau;
        c
    }

    pub fn with_tx_kb_size(&self, n: usize) -> Self {
        let mut c = self.clone();
        c.world.tx_kb_size = n;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}
