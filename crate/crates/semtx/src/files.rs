//! On-disk formats: TOML configs and versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use semtx_core::baselines::OfflineInstance;
use semtx_core::config::ExperimentConfig;
use semtx_core::sac::{LearnerCheckpoint, SacLearner};
use semtx_core::skb::World;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const WORLD_FORMAT: &str = "semtx-world";
pub const LEARNER_FORMAT: &str = "semtx-learner";
pub const FORMAT_VERSION: u32 = 1;

/// Reads and validates an experiment config. Unknown keys are errors.
pub fn load_config(path: &Path) -> AppResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| AppError::ConfigRead { path: path.into(), source })?;
    let cfg = parse_config(&text).map_err(|message| AppError::ConfigParse { path: path.into(), message })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn config_to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config always serialises")
}

pub fn write_text(path: &Path, text: &str) -> AppResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e))?;
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e))
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct WorldBody {
    world: World,
}

#[derive(Serialize, Deserialize)]
struct LearnerBody {
    learner: LearnerCheckpoint,
}

fn check_header(path: &Path, format: &str, version: u32, want: &str) -> AppResult<()> {
    if format != want {
        return Err(AppError::format(path, format!("expected a {want} file, found {format}")));
    }
    if version != FORMAT_VERSION {
        return Err(AppError::format(path, format!("unsupported {want} version {version}")));
    }
    Ok(())
}

/// World checkpoint: seed, generator config, membership sets and all
/// matrices (row-major), enough to rebuild every menu bit for bit.
pub fn write_world(path: &Path, world: &World) -> AppResult<()> {
    let v =
        Versioned { format: WORLD_FORMAT.into(), version: FORMAT_VERSION, body: WorldBody { world: world.clone() } };
    write_json(path, &v)
}

pub fn read_world(path: &Path) -> AppResult<World> {
    let v: Versioned<WorldBody> = read_json(path)?;
    check_header(path, &v.format, v.version, WORLD_FORMAT)?;
    Ok(v.body.world)
}

/// Learner checkpoint: hyperparameters, every network, optimiser moments,
/// the input standardiser and the generator position.
pub fn write_learner(path: &Path, learner: &SacLearner) -> AppResult<()> {
    let v = Versioned {
        format: LEARNER_FORMAT.into(),
        version: FORMAT_VERSION,
        body: LearnerBody { learner: learner.checkpoint() },
    };
    let text = serde_json::to_string(&v).map_err(|e| AppError::format(path, e))?;
    write_text(path, &text)
}

pub fn read_learner(path: &Path) -> AppResult<SacLearner> {
    let v: Versioned<LearnerBody> = read_json(path)?;
    check_header(path, &v.format, v.version, LEARNER_FORMAT)?;
    Ok(SacLearner::from_checkpoint(v.body.learner)?)
}

pub fn read_instance(path: &Path) -> AppResult<OfflineInstance> {
    let raw: OfflineInstance = read_json(path)?;
    Ok(OfflineInstance::new(raw.budget_s, raw.slots)?)
}
