//! CSV outputs. Column names are the contract for downstream plotting.

use std::fs::{self, File};
use std::path::Path;

use semtx_core::env::SlotRecord;
use semtx_core::link::LevelMenu;
use semtx_core::sac::EpochMetrics;
use serde::Serialize;

use crate::error::{AppError, AppResult};

fn create(path: &Path) -> AppResult<csv::Writer<File>> {
    create_with_headers(path, true)
}

fn create_with_headers(path: &Path, headers: bool) -> AppResult<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    csv::WriterBuilder::new().has_headers(headers).from_path(path).map_err(|e| AppError::format(path, e))
}

#[derive(Serialize)]
struct MetricsRow {
    epoch: usize,
    phase: &'static str,
    mean_reward: f64,
    mean_sem_loss: f64,
    mean_latency: f64,
    accuracy: f64,
    alpha: f64,
    #[serde(rename = "J_Q")]
    j_q: f64,
    #[serde(rename = "J_pi")]
    j_pi: f64,
}

/// Appends per-epoch rows as training progresses.
pub struct MetricsWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> AppResult<Self> {
        // The header goes out before the first epoch so a run with no epochs
        // still leaves a well-formed table.
        let mut inner = create_with_headers(path, false)?;
        inner
            .write_record([
                "epoch",
                "phase",
                "mean_reward",
                "mean_sem_loss",
                "mean_latency",
                "accuracy",
                "alpha",
                "J_Q",
                "J_pi",
            ])
            .map_err(|e| AppError::format(path, e))?;
        inner.flush().map_err(|e| AppError::io(path, e))?;
        Ok(MetricsWriter { path: path.into(), inner })
    }

    pub fn append(&mut self, rows: &[EpochMetrics]) -> AppResult<()> {
        for m in rows {
            let row = MetricsRow {
                epoch: m.epoch,
                phase: m.phase.as_str(),
                mean_reward: m.mean_reward,
                mean_sem_loss: m.mean_sem_loss,
                mean_latency: m.mean_latency,
                accuracy: m.accuracy,
                alpha: m.alpha,
                j_q: m.j_q,
                j_pi: m.j_pi,
            };
            self.inner.serialize(row).map_err(|e| AppError::format(&self.path, e))?;
        }
        self.inner.flush().map_err(|e| AppError::io(&self.path, e))
    }
}

#[derive(Serialize)]
struct TraceRow {
    episode: usize,
    slot: usize,
    sample: usize,
    distance_m: f64,
    rate_bps: f64,
    level: u8,
    loss: f64,
    latency_s: f64,
    avg_latency_s: f64,
    y1: f64,
    y2: f64,
    reward: f64,
}

/// One row per sample and slot; `avg_latency_s` is the running mean the
/// reward was judged against.
pub fn write_trace(path: &Path, records: &[(usize, SlotRecord)]) -> AppResult<()> {
    let mut w = create(path)?;
    for (episode, r) in records {
        for (m, level) in r.levels.iter().enumerate() {
            let row = TraceRow {
                episode: *episode,
                slot: r.slot,
                sample: m,
                distance_m: r.distance,
                rate_bps: r.rate,
                level: level.number(),
                loss: r.losses[m],
                latency_s: r.latencies[m],
                avg_latency_s: r.avg_latency_before,
                y1: r.reward.y1,
                y2: r.reward.y2,
                reward: r.reward.total,
            };
            w.serialize(row).map_err(|e| AppError::format(path, e))?;
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

#[derive(Serialize)]
struct MenuRow {
    slot: usize,
    sample: usize,
    level: u8,
    loss: f64,
    latency: f64,
    predicted: usize,
    truth: usize,
}

/// `menus[i]` holds the menus and true labels of slot `i + 1`.
pub fn write_menus(path: &Path, menus: &[(Vec<LevelMenu>, Vec<usize>)]) -> AppResult<()> {
    let mut w = create(path)?;
    for (i, (slot_menus, truth)) in menus.iter().enumerate() {
        for (m, menu) in slot_menus.iter().enumerate() {
            for level in semtx_core::link::Level::ALL {
                let row = MenuRow {
                    slot: i + 1,
                    sample: m,
                    level: level.number(),
                    loss: menu.loss_of(level),
                    latency: menu.latency_of(level),
                    predicted: menu.predicted_by(level),
                    truth: truth[m],
                };
                w.serialize(row).map_err(|e| AppError::format(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

/// One aggregated sweep point: mean over seeds, plus the spread of the loss.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub algorithm: String,
    pub avg_sem_loss: f64,
    pub avg_latency: f64,
    pub accuracy: f64,
    pub sem_loss_std: f64,
    pub runs: usize,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> AppResult<()> {
    let mut w = create(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| AppError::format(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_sweep(path: &Path) -> AppResult<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AppError::format(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| AppError::format(path, e))
}
