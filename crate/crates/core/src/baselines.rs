//! Greedy policies and the offline optimum.
//!
//! The offline problem fixes a finite run of slots in advance and asks for
//! one level per decision minimising the mean semantic loss while keeping the
//! mean latency within the budget: a multi-choice knapsack. Three exact or
//! conservative solvers are provided:
//!
//!  * enumeration of all `4^n` choices (the reference, small `n` only);
//!  * a Pareto dynamic program over `(latency sum, loss sum)` prefixes, which
//!    is exact because both sums are accumulated in the same order as the
//!    enumeration and floating-point addition is monotone;
//!  * a latency-grid dynamic program that rounds every latency *up* to a cell,
//!    so its answers are always truly feasible and its loss is within the grid
//!    resolution of the optimum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::link::{Level, LevelMenu, TransmissionChoice};
use crate::{Error, Result};

/// Lowest-loss level while the running mean latency is within budget,
/// otherwise the label. Ties go to the smaller level.
pub fn loss_first(menu: &LevelMenu, avg_latency: f64, budget: f64) -> Level {
    if avg_latency > budget {
        return Level::Label;
    }
    argmin_level(&menu.loss)
}

/// Lowest-latency level; ties go to the smaller level.
pub fn latency_first(menu: &LevelMenu) -> Level {
    argmin_level(&menu.latency)
}

fn argmin_level(values: &[f64; 4]) -> Level {
    let mut best = 0;
    for l in 1..4 {
        if values[l] < values[best] {
            best = l;
        }
    }
    Level::ALL[best]
}

/// A fixed run of slots, each with `M` sample menus, and the mean-latency budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineInstance {
    pub budget_s: f64,
    pub slots: Vec<Vec<LevelMenu>>,
}

/// Losses and latency of one complete choice sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanScore {
    pub choices: Vec<TransmissionChoice>,
    pub avg_loss: f64,
    pub avg_latency: f64,
    pub feasible: bool,
}

impl OfflineInstance {
    pub fn new(budget_s: f64, slots: Vec<Vec<LevelMenu>>) -> Result<Self> {
        if slots.is_empty() || slots[0].is_empty() {
            return Err(Error::contract("offline instance needs at least one slot and one sample"));
        }
        let m = slots[0].len();
        if slots.iter().any(|s| s.len() != m) {
            return Err(Error::contract("every slot must have the same number of samples"));
        }
        let finite = slots.iter().flatten().all(|menu| {
            menu.loss.iter().chain(&menu.latency).all(|x| x.is_finite()) && menu.latency.iter().all(|&t| t > 0.0)
        });
        if !finite {
            return Err(Error::contract("menus must be finite with positive latencies"));
        }
        if !(budget_s >= 0.0 && budget_s.is_finite()) {
            return Err(Error::config("budget must be finite and non-negative"));
        }
        Ok(OfflineInstance { budget_s, slots })
    }

    /// Records the first `slots` menus of the episode `seed` of `env`.
    pub fn from_environment(env: &mut Environment, seed: u64, slots: usize) -> Result<Self> {
        if slots == 0 || slots > env.config().task.horizon_slots {
            return Err(Error::contract(format!(
                "slots must lie in 1..={}, got {slots}",
                env.config().task.horizon_slots
            )));
        }
        env.reset(seed)?;
        let mut out = Vec::with_capacity(slots);
        for _ in 0..slots {
            let menus = env.menus()?.to_vec();
            let choice = vec![Level::Label; menus.len()];
            out.push(menus);
            env.step_levels(&choice)?;
        }
        OfflineInstance::new(env.config().task.latency_budget_s, out)
    }

    pub fn samples_per_slot(&self) -> usize {
        self.slots[0].len()
    }

    pub fn decisions(&self) -> usize {
        self.slots.len() * self.samples_per_slot()
    }

    fn flat(&self) -> Vec<&LevelMenu> {
        self.slots.iter().flatten().collect()
    }

    fn within_budget(&self, latency_sum: f64) -> bool {
        latency_sum / self.decisions() as f64 <= self.budget_s
    }

    /// Scores a choice sequence, summing decisions in slot-then-sample order.
    pub fn score(&self, choices: &[TransmissionChoice]) -> Result<PlanScore> {
        if choices.len() != self.slots.len() || choices.iter().any(|c| c.len() != self.samples_per_slot()) {
            return Err(Error::contract("choice shape does not match the instance"));
        }
        let (mut loss, mut lat) = (0.0, 0.0);
        for (menus, choice) in self.slots.iter().zip(choices) {
            for (menu, &level) in menus.iter().zip(choice) {
                loss += menu.loss_of(level);
                lat += menu.latency_of(level);
            }
        }
        let n = self.decisions() as f64;
        Ok(PlanScore {
            choices: choices.to_vec(),
            avg_loss: loss / n,
            avg_latency: lat / n,
            feasible: self.within_budget(lat),
        })
    }

    fn check_feasible(&self) -> Result<()> {
        let cheapest: f64 = self.flat().iter().fold(0.0, |acc, m| acc + m.min_latency());
        if self.within_budget(cheapest) {
            Ok(())
        } else {
            Err(Error::Infeasible(format!(
                "even the cheapest level everywhere averages {:.6e} s against a budget of {:.6e} s",
                cheapest / self.decisions() as f64,
                self.budget_s
            )))
        }
    }

    fn reshape(&self, flat: &[Level]) -> Vec<TransmissionChoice> {
        flat.chunks(self.samples_per_slot()).map(|c| c.to_vec()).collect()
    }

    /// Loss-first greedy replayed on the instance: the running mean latency is
    /// updated after each slot, as in the online process.
    pub fn run_loss_first(&self) -> PlanScore {
        let (mut sum, mut count) = (0.0, 0usize);
        let mut choices = Vec::with_capacity(self.slots.len());
        for menus in &self.slots {
            let avg = if count == 0 { 0.0 } else { sum / count as f64 };
            let choice: TransmissionChoice = menus.iter().map(|m| loss_first(m, avg, self.budget_s)).collect();
            for (m, &l) in menus.iter().zip(&choice) {
                sum += m.latency_of(l);
                count += 1;
            }
            choices.push(choice);
        }
        self.score(&choices).expect("shape matches by construction")
    }

    pub fn run_latency_first(&self) -> PlanScore {
        let choices: Vec<TransmissionChoice> =
            self.slots.iter().map(|menus| menus.iter().map(latency_first).collect()).collect();
        self.score(&choices).expect("shape matches by construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMethod {
    /// Enumerate when within the cap, else the Pareto program, else the grid.
    Auto,
    Enumerate,
    Pareto,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub method: OracleMethod,
    /// Largest `4^n` the enumerator accepts.
    pub enumeration_cap: u64,
    /// Largest number of live prefixes the Pareto program keeps.
    pub pareto_state_cap: usize,
    /// Cells the total latency budget is split into by the grid program.
    pub grid_cells: usize,
    /// Largest `decisions × grid_cells` table the grid program allocates.
    pub grid_table_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            method: OracleMethod::Auto,
            enumeration_cap: 1_000_000,
            pareto_state_cap: 1_000_000,
            grid_cells: 10_000,
            grid_table_cap: 100_000_000,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enumeration_cap == 0 || self.pareto_state_cap == 0 || self.grid_cells == 0 {
            return Err(Error::config("oracle caps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub choices: Vec<TransmissionChoice>,
    pub avg_loss: f64,
    pub avg_latency: f64,
    pub method: OracleMethod,
    /// Width of one latency cell in seconds of *total* latency; grid method only.
    pub grid_resolution_s: Option<f64>,
}

fn solution(inst: &OfflineInstance, flat: &[Level], method: OracleMethod, res: Option<f64>) -> OracleSolution {
    let score = inst.score(&inst.reshape(flat)).expect("shape matches by construction");
    OracleSolution {
        choices: score.choices,
        avg_loss: score.avg_loss,
        avg_latency: score.avg_latency,
        method,
        grid_resolution_s: res,
    }
}

/// Checks every choice sequence. Ties keep the lexicographically first one.
pub fn enumerate(inst: &OfflineInstance, cap: u64) -> Result<OracleSolution> {
    let n = inst.decisions();
    let total = 4u64.checked_pow(n as u32).filter(|&t| t <= cap);
    let Some(total) = total else {
        return Err(Error::CapExceeded { decisions: n, cap: cap as usize });
    };
    inst.check_feasible()?;
    let menus = inst.flat();
    let mut digits = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for code in 0..total {
        let mut c = code;
        for j in (0..n).rev() {
            digits[j] = (c % 4) as usize;
            c /= 4;
        }
        let (mut loss, mut lat) = (0.0, 0.0);
        for (menu, &l) in menus.iter().zip(&digits) {
            loss += menu.loss[l];
            lat += menu.latency[l];
        }
        if inst.within_budget(lat) && best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, digits.clone()));
        }
    }
    let (_, digits) = best.expect("feasibility was checked");
    let flat: Vec<Level> = digits.iter().map(|&l| Level::ALL[l]).collect();
    Ok(solution(inst, &flat, OracleMethod::Enumerate, None))
}

#[derive(Clone, Copy)]
struct Prefix {
    latency: f64,
    loss: f64,
    parent: u32,
    level: u8,
}

/// Exact dynamic program over non-dominated `(latency, loss)` prefixes.
pub fn pareto(inst: &OfflineInstance, state_cap: usize) -> Result<OracleSolution> {
    inst.check_feasible()?;
    let menus = inst.flat();
    let n = menus.len();
    let mut layers: Vec<Vec<Prefix>> = Vec::with_capacity(n);
    let mut front = vec![Prefix { latency: 0.0, loss: 0.0, parent: 0, level: 0 }];
    let mut candidates = Vec::new();
    for menu in &menus {
        candidates.clear();
        for (p, s) in front.iter().enumerate() {
            for l in 0..4 {
                let latency = s.latency + menu.latency[l];
                // latencies only grow, so an over-budget prefix never recovers
                if !inst.within_budget(latency) {
                    continue;
                }
                candidates.push(Prefix { latency, loss: s.loss + menu.loss[l], parent: p as u32, level: l as u8 });
            }
        }
        candidates.sort_by(|a, b| a.latency.total_cmp(&b.latency).then(a.loss.total_cmp(&b.loss)));
        let mut next: Vec<Prefix> = Vec::new();
        for c in &candidates {
            if next.last().is_none_or(|last| c.loss < last.loss) {
                next.push(*c);
            }
        }
        if next.len() > state_cap {
            return Err(Error::CapExceeded { decisions: n, cap: state_cap });
        }
        layers.push(core::mem::replace(&mut front, next));
    }
    layers.push(front);

    let last = layers.last().unwrap();
    let mut idx = (0..last.len()).min_by(|&a, &b| last[a].loss.total_cmp(&last[b].loss)).expect("feasible");
    let mut flat = vec![Level::Label; n];
    for j in (1..=n).rev() {
        let p = layers[j][idx];
        flat[j - 1] = Level::ALL[p.level as usize];
        idx = p.parent as usize;
    }
    Ok(solution(inst, &flat, OracleMethod::Pareto, None))
}

/// Knapsack over a latency grid of `cells` cells spanning the total budget.
/// Latencies are rounded up to whole cells, so every returned plan is feasible.
pub fn grid(inst: &OfflineInstance, cells: usize, table_cap: usize) -> Result<OracleSolution> {
    inst.check_feasible()?;
    let menus = inst.flat();
    let n = menus.len();
    if n.saturating_mul(cells + 1) > table_cap {
        return Err(Error::CapExceeded { decisions: n, cap: table_cap / (cells + 1) });
    }
    let total_budget = inst.budget_s * n as f64;
    let width = total_budget / cells as f64;
    let to_cells = |t: f64| -> usize {
        if width <= 0.0 {
            return if t > 0.0 { cells + 1 } else { 0 };
        }
        libm::ceil(t / width) as usize
    };

    const NONE: u8 = u8::MAX;
    let mut best = vec![f64::INFINITY; cells + 1];
    best[0] = 0.0;
    let mut choice = vec![NONE; n * (cells + 1)];
    let mut next = vec![f64::INFINITY; cells + 1];
    for (j, menu) in menus.iter().enumerate() {
        next.fill(f64::INFINITY);
        let cost = menu.latency.map(to_cells);
        for used in 0..=cells {
            if best[used].is_infinite() {
                continue;
            }
            for l in 0..4 {
                let u = used + cost[l];
                if u > cells {
                    continue;
                }
                let loss = best[used] + menu.loss[l];
                if loss < next[u] {
                    next[u] = loss;
                    choice[j * (cells + 1) + u] = l as u8;
                }
            }
        }
        core::mem::swap(&mut best, &mut next);
    }
    let end = (0..=cells).filter(|&u| best[u].is_finite()).min_by(|&a, &b| best[a].total_cmp(&best[b]));
    let Some(mut used) = end else {
        return Err(Error::Infeasible(format!("no plan fits the budget on a grid of {cells} cells; refine the grid")));
    };
    let mut flat = vec![Level::Label; n];
    for j in (0..n).rev() {
        let l = choice[j * (cells + 1) + used] as usize;
        flat[j] = Level::ALL[l];
        used -= to_cells(menus[j].latency[l]);
    }
    Ok(solution(inst, &flat, OracleMethod::Grid, Some(width)))
}

/// The offline optimum with the configured solver.
pub fn offline_optimum(inst: &OfflineInstance, cfg: &OracleConfig) -> Result<OracleSolution> {
    match cfg.method {
        OracleMethod::Enumerate => enumerate(inst, cfg.enumeration_cap),
        OracleMethod::Pareto => pareto(inst, cfg.pareto_state_cap),
        OracleMethod::Grid => grid(inst, cfg.grid_cells, cfg.grid_table_cap),
        OracleMethod::Auto => {
            let n = inst.decisions() as u32;
            if 4u64.checked_pow(n).is_some_and(|t| t <= cfg.enumeration_cap) {
                return enumerate(inst, cfg.enumeration_cap);
            }
            match pareto(inst, cfg.pareto_state_cap) {
                Err(Error::CapExceeded { .. }) => grid(inst, cfg.grid_cells, cfg.grid_table_cap),
                other => other,
            }
        }
    }
}
