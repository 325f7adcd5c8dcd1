//! Achievable rate under distance-based path loss, and the one-dimensional
//! random-velocity walk that drives the transmitter–receiver distance.

use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::SimRng;
use crate::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    math::pow(10.0, db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * math::log10(x)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w * 1e3)
}

/// Link parameters as written in a config file, with the unit in each key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub tx_power_dbm: f64,
    pub ref_pathloss_db: f64,
    pub ref_distance_m: f64,
    pub pathloss_exponent: f64,
    pub quantization_bits: u32,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            bandwidth_hz: 100e3,
            noise_psd_dbm_per_hz: -114.0,
            tx_power_dbm: 10.0,
            ref_pathloss_db: -30.0,
            ref_distance_m: 1.0,
            pathloss_exponent: 2.0,
            quantization_bits: 32,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            bandwidth: self.bandwidth_hz,
            noise_psd: dbm_to_watts(self.noise_psd_dbm_per_hz),
            tx_power: dbm_to_watts(self.tx_power_dbm),
            ref_pathloss: db_to_linear(self.ref_pathloss_db),
            ref_distance: self.ref_distance_m,
            pathloss_exponent: self.pathloss_exponent,
            quantization_bits: f64::from(self.quantization_bits),
        }
    }
}

/// Link parameters in SI units: Hz, W/Hz, W, linear gain, m, bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub bandwidth: f64,
    pub noise_psd: f64,
    pub tx_power: f64,
    pub ref_pathloss: f64,
    pub ref_distance: f64,
    pub pathloss_exponent: f64,
    pub quantization_bits: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("noise_psd", self.noise_psd),
            ("tx_power", self.tx_power),
            ("ref_pathloss", self.ref_pathloss),
            ("ref_distance", self.ref_distance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("channel {name} must be positive and finite, got {v}")));
            }
        }
        if !(self.pathloss_exponent >= 1.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::config(format!("path-loss exponent must be >= 1, got {}", self.pathloss_exponent)));
        }
        if self.quantization_bits < 1.0 {
            return Err(Error::config("quantization must be at least one bit per scalar"));
        }
        Ok(())
    }

    /// Received SNR at distance `d`.
    pub fn snr(&self, distance: f64) -> f64 {
        let gain = self.ref_pathloss * math::pow(distance / self.ref_distance, -self.pathloss_exponent);
        self.tx_power * gain / (self.bandwidth * self.noise_psd)
    }
}

/// Achievable rate in bits/s at distance `d` metres:
/// `B log2(1 + P β0 (d/d0)^-ζ / (B N0))`.
pub fn rate(params: &ChannelParams, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain { what: "distance", value: distance });
    }
    // log1p keeps the rate strictly positive and decreasing when the SNR is tiny
    Ok(params.bandwidth * libm::log1p(params.snr(distance)) / core::f64::consts::LN_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub slot_duration_s: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub min_velocity_m_per_s: f64,
    pub max_velocity_m_per_s: f64,
    pub resample_period_slots: u64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            slot_duration_s: 0.1,
            min_distance_m: 20.0,
            max_distance_m: 200.0,
            min_velocity_m_per_s: -6.0,
            max_velocity_m_per_s: 6.0,
            resample_period_slots: 50,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_distance_m > 0.0 && self.min_distance_m <= self.max_distance_m && self.max_distance_m.is_finite())
        {
            return Err(Error::config(format!(
                "distance bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.min_distance_m, self.max_distance_m
            )));
        }
        if !(self.min_velocity_m_per_s <= self.max_velocity_m_per_s
            && self.min_velocity_m_per_s.is_finite()
            && self.max_velocity_m_per_s.is_finite())
        {
            return Err(Error::config("velocity range must be finite with min <= max"));
        }
        if !(self.slot_duration_s > 0.0 && self.slot_duration_s.is_finite()) {
            return Err(Error::config("slot duration must be positive"));
        }
        if self.resample_period_slots == 0 {
            return Err(Error::config("velocity resample period must be at least one slot"));
        }
        Ok(())
    }

    fn draw_velocity(&self, rng: &mut SimRng) -> f64 {
        if self.min_velocity_m_per_s == self.max_velocity_m_per_s {
            self.min_velocity_m_per_s
        } else {
            rng.random_range(self.min_velocity_m_per_s..=self.max_velocity_m_per_s)
        }
    }
}

/// Position and velocity during slot `slot` (1-based). The velocity shown is
/// the one that moves the transmitter over this slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub distance: f64,
    pub velocity: f64,
    pub slot: u64,
}

impl MobilityState {
    /// Slot 1: distance uniform in the bounds, fresh velocity.
    pub fn start(cfg: &MobilityConfig, rng: &mut SimRng) -> Self {
        let distance = if cfg.min_distance_m == cfg.max_distance_m {
            cfg.min_distance_m
        } else {
            rng.random_range(cfg.min_distance_m..=cfg.max_distance_m)
        };
        let velocity = cfg.draw_velocity(rng);
        MobilityState { distance, velocity, slot: 1 }
    }
}

/// Moves one slot, reflecting off the distance bounds (a reflection flips the
/// velocity), then draws a new velocity whenever the new slot `i` satisfies
/// `(i - 1) % period == 0`.
pub fn step_mobility(state: &MobilityState, cfg: &MobilityConfig, rng: &mut SimRng) -> MobilityState {
    let (lo, hi) = (cfg.min_distance_m, cfg.max_distance_m);
    let mut d = state.distance + state.velocity * cfg.slot_duration_s;
    let mut v = state.velocity;
    if hi > lo {
        while d > hi || d < lo {
            if d > hi {
                d = 2.0 * hi - d;
            } else {
                d = 2.0 * lo - d;
            }
            v = -v;
        }
    } else {
        d = lo;
    }
    let slot = state.slot + 1;
    if (slot - 1).is_multiple_of(cfg.resample_period_slots) {
        v = cfg.draw_velocity(rng);
    }
    MobilityState { distance: d, velocity: v, slot }
}
