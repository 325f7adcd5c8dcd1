//! Squashed-Gaussian policy head.
//!
//! The network emits a mean and a raw log-std per action dimension. A sample
//! is `a = mid + half·tanh(u)` with `u = μ + σ·ε`, which maps onto the action
//! interval `[0.5, 4.5]`.

use crate::math::{exp, ln, tanh};

pub const ACTION_MID: f64 = 2.5;
pub const ACTION_HALF: f64 = 2.0;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps the log-Jacobian finite when `tanh` saturates.
pub const JACOBIAN_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn clamp_log_std(raw: f64) -> f64 {
    raw.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

pub fn squash(u: f64) -> f64 {
    ACTION_MID + ACTION_HALF * tanh(u)
}

/// Deterministic action used for evaluation.
pub fn mean_action(mean: f64) -> f64 {
    squash(mean)
}

/// `log(half·(1 − tanh²u) + eps)`, the per-dimension change-of-variables term.
pub fn log_jacobian(t: f64) -> f64 {
    ln(ACTION_HALF * (1.0 - t * t) + JACOBIAN_EPS)
}

/// One reparameterised draw in a single dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimSample {
    pub u: f64,
    pub t: f64,
    pub action: f64,
    pub sigma: f64,
    /// Log-density contribution of this dimension.
    pub log_prob: f64,
    /// Whether the log-std was inside the clamp (and so receives gradient).
    pub log_std_active: bool,
}

pub fn sample_dim(mean: f64, raw_log_std: f64, eps: f64) -> DimSample {
    let log_std = clamp_log_std(raw_log_std);
    let sigma = exp(log_std);
    let u = mean + sigma * eps;
    let t = tanh(u);
    let gauss = -0.5 * eps * eps - log_std - HALF_LN_2PI;
    DimSample {
        u,
        t,
        action: ACTION_MID + ACTION_HALF * t,
        sigma,
        log_prob: gauss - log_jacobian(t),
        log_std_active: (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_log_std),
    }
}

/// `d log_prob / d u` through the Jacobian term only (the Gaussian part does
/// not depend on `u` once `ε` is fixed).
pub fn dlogp_du(t: f64) -> f64 {
    let s = 1.0 - t * t;
    2.0 * ACTION_HALF * t * s / (ACTION_HALF * s + JACOBIAN_EPS)
}

/// Density of an action in `(0.5, 4.5)`, for checking normalisation.
pub fn log_prob_of_action(mean: f64, raw_log_std: f64, action: f64) -> f64 {
    let log_std = clamp_log_std(raw_log_std);
    let t = (action - ACTION_MID) / ACTION_HALF;
    let u = libm::atanh(t);
    let z = (u - mean) / exp(log_std);
    -0.5 * z * z - log_std - HALF_LN_2PI - log_jacobian(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_noise_limit_is_deterministic() {
        let s = sample_dim(0.3, -20.0, 0.7);
        assert!((s.action - mean_action(0.3)).abs() < 1e-8);
    }

    #[test]
    fn density_integrates_to_one() {
        for (mu, ls) in [(0.0, 0.0), (0.8, -1.0), (-1.2, 0.5)] {
            let n = 400_000;
            let (lo, hi) = (0.5, 4.5);
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let a = lo + (i as f64 + 0.5) * h;
                total += exp(log_prob_of_action(mu, ls, a)) * h;
            }
            assert!((total - 1.0).abs() < 1e-2, "mu {mu} ls {ls}: {total}");
        }
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let s = sample_dim(0.4, -0.3, 0.9);
        assert!((s.log_prob - log_prob_of_action(0.4, -0.3, s.action)).abs() < 1e-9);
    }

    #[test]
    fn symmetric_mean() {
        let mut rng = stream_rng(11, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            sum += sample_dim(0.0, 0.0, e).action;
        }
        assert!((sum / n as f64 - 2.5).abs() < 0.02);
    }

    #[test]
    fn clamp_bounds_sigma() {
        assert_eq!(sample_dim(0.0, 50.0, 0.0).sigma, exp(2.0));
        assert_eq!(sample_dim(0.0, -50.0, 0.0).sigma, exp(-20.0));
        assert!(!sample_dim(0.0, 50.0, 0.0).log_std_active);
    }

    #[test]
    fn jacobian_derivative_matches_finite_difference() {
        for u in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-6;
            let f = |u: f64| -log_jacobian(tanh(u));
            let fd = (f(u + h) - f(u - h)) / (2.0 * h);
            assert!((fd - dlogp_du(tanh(u))).abs() < 1e-6);
        }
    }
}
