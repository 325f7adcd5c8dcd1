use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;

/// Per-feature running mean and variance (Welford).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    enabled: bool,
}

impl RunningNorm {
    pub fn new(width: usize, enabled: bool) -> Self {
        RunningNorm { count: 0, mean: vec![0.0; width], m2: vec![0.0; width], enabled }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) {
        if !self.enabled {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for (i, &v) in x.iter().enumerate() {
            let d = v - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (v - self.mean[i]);
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        let s = sqrt(self.m2[i] / (self.count - 1) as f64);
        if s > 1e-8 {
            s
        } else {
            1.0
        }
    }

    /// Writes the standardised `x` into `out`. Identity until two samples
    /// have been seen or when disabled.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        if !self.enabled || self.count < 2 {
            out.copy_from_slice(x);
            return;
        }
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.std(i);
        }
    }
}
