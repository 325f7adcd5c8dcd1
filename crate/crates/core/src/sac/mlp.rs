use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{axpy, sqrt};
use crate::{Error, Result};

/// Fully connected network with rectifier hidden layers and a linear output.
///
/// All weights live in one flat vector so optimisers and target averaging
/// work on a single slice. Each layer stores its weight as `in × out`
/// row-major followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |a| a.as_slice())
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / sqrt(w[0] as f64);
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::contract("network needs at least an input and an output layer"));
        }
        if params.len() != param_count(sizes) {
            return Err(Error::contract("parameter count does not match layer sizes"));
        }
        Ok(Mlp { sizes: sizes.to_vec(), params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Runs `batch` row-major inputs through the network.
    pub fn forward(&self, input: &[f64], batch: usize, cache: &mut MlpCache) {
        let layers = self.sizes.len() - 1;
        debug_assert_eq!(input.len(), batch * self.sizes[0]);
        cache.batch = batch;
        cache.acts.resize(layers + 1, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(input);

        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;

            let (head, tail) = cache.acts.split_at_mut(l + 1);
            let x = &head[l];
            let y = &mut tail[0];
            y.clear();
            y.resize(batch * n_out, 0.0);
            for r in 0..batch {
                let yr = &mut y[r * n_out..(r + 1) * n_out];
                yr.copy_from_slice(b);
                for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                    if xi != 0.0 {
                        axpy(xi, &w[i * n_out..(i + 1) * n_out], yr);
                    }
                }
            }
            if l + 1 < layers {
                for v in y.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Single-input convenience wrapper around [`Mlp::forward`].
    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.forward(input, 1, &mut cache);
        cache.output().to_vec()
    }

    /// Backpropagates `grad_out` (batch × output) through the activations in
    /// `cache`. Parameter gradients are added into `grads` and the input
    /// gradient is written to `grad_in`; either may be skipped.
    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: &[f64],
        mut grads: Option<&mut [f64]>,
        grad_in: Option<&mut [f64]>,
    ) {
        let layers = self.sizes.len() - 1;
        let batch = cache.batch;
        debug_assert_eq!(grad_out.len(), batch * self.output_dim());

        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        let mut delta = grad_out.to_vec();
        let mut grad_in = grad_in;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let w = &self.params[off..off + n_in * n_out];
            let x = &cache.acts[l];
            if let Some(grads) = grads.as_deref_mut() {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for r in 0..batch {
                    let d = &delta[r * n_out..(r + 1) * n_out];
                    axpy(1.0, d, gb);
                    for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                        if xi != 0.0 {
                            axpy(xi, d, &mut gw[i * n_out..(i + 1) * n_out]);
                        }
                    }
                }
            }
            if l == 0 && grad_in.is_none() {
                break;
            }
            // Transposed copy so the input gradient is a sum of contiguous rows.
            let mut wt = vec![0.0; n_in * n_out];
            for i in 0..n_in {
                for j in 0..n_out {
                    wt[j * n_in + i] = w[i * n_out + j];
                }
            }
            let mut prev = vec![0.0; batch * n_in];
            for r in 0..batch {
                let d = &delta[r * n_out..(r + 1) * n_out];
                let p = &mut prev[r * n_in..(r + 1) * n_in];
                for (j, &dj) in d.iter().enumerate() {
                    if dj != 0.0 {
                        axpy(dj, &wt[j * n_in..(j + 1) * n_in], p);
                    }
                }
                if l > 0 {
                    // Rectifier mask: the stored activation is zero exactly where the unit was off.
                    for (pi, &xi) in p.iter_mut().zip(&x[r * n_in..(r + 1) * n_in]) {
                        if xi <= 0.0 {
                            *pi = 0.0;
                        }
                    }
                }
            }
            if l == 0 {
                if let Some(gi) = grad_in.take() {
                    gi.copy_from_slice(&prev);
                }
            }
            delta = prev;
        }
    }

    /// `self ← ξ·other + (1 − ξ)·self`.
    pub fn soft_update_from(&mut self, other: &Mlp, xi: f64) {
        debug_assert_eq!(self.sizes, other.sizes);
        for (t, &s) in self.params.iter_mut().zip(&other.params) {
            *t = xi * s + (1.0 - xi) * *t;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn loss(net: &Mlp, x: &[f64], batch: usize, target: &[f64]) -> f64 {
        let mut c = MlpCache::default();
        net.forward(x, batch, &mut c);
        c.output().iter().zip(target).map(|(y, t)| 0.5 * (y - t) * (y - t)).sum()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(3, 0);
        let net = Mlp::new(&[3, 5, 4, 2], &mut rng);
        let batch = 3;
        let x: Vec<f64> = (0..batch * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..batch * 2).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut c = MlpCache::default();
        net.forward(&x, batch, &mut c);
        let g_out: Vec<f64> = c.output().iter().zip(&t).map(|(y, t)| y - t).collect();
        let mut grads = vec![0.0; net.param_count()];
        let mut gin = vec![0.0; x.len()];
        net.backward(&c, &g_out, Some(&mut grads), Some(&mut gin));

        let h = 1e-6;
        for p in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[p] += h;
            let mut minus = net.clone();
            minus.params_mut()[p] -= h;
            let fd = (loss(&plus, &x, batch, &t) - loss(&minus, &x, batch, &t)) / (2.0 * h);
            assert!((fd - grads[p]).abs() < 1e-6, "param {p}: fd {fd} vs {}", grads[p]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&net, &xp, batch, &t) - loss(&net, &xm, batch, &t)) / (2.0 * h);
            assert!((fd - gin[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn soft_update_extremes() {
        let mut rng = stream_rng(1, 0);
        let a = Mlp::new(&[2, 3, 1], &mut rng);
        let b = Mlp::new(&[2, 3, 1], &mut rng);
        let mut t = b.clone();
        t.soft_update_from(&a, 1.0);
        assert_eq!(t, a);
        let mut t = b.clone();
        t.soft_update_from(&a, 0.0);
        assert_eq!(t, b);
    }

    #[test]
    fn from_params_checks_length() {
        assert!(Mlp::from_params(&[2, 1], vec![0.0; 3]).is_ok());
        assert!(Mlp::from_params(&[2, 1], vec![0.0; 2]).is_err());
    }
}
