use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<'a> {
    pub obs: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_obs: &'a [f64],
    pub done: bool,
}

/// A sampled minibatch, stored row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionBatch {
    pub len: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<f64>,
}

/// Fixed-capacity ring buffer with FIFO eviction. Storage grows on demand, so
/// a large nominal capacity costs nothing until it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStore {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    /// Index of the slot the next insertion overwrites once full.
    head: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<bool>,
}

impl ReplayStore {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0);
        ReplayStore {
            capacity,
            obs_dim,
            act_dim,
            head: 0,
            obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<'_>) {
        debug_assert_eq!(t.obs.len(), self.obs_dim);
        debug_assert_eq!(t.action.len(), self.act_dim);
        if self.len() < self.capacity {
            self.obs.extend_from_slice(t.obs);
            self.action.extend_from_slice(t.action);
            self.reward.push(t.reward);
            self.next_obs.extend_from_slice(t.next_obs);
            self.done.push(t.done);
            return;
        }
        let i = self.head;
        let (o, a) = (self.obs_dim, self.act_dim);
        self.obs[i * o..(i + 1) * o].copy_from_slice(t.obs);
        self.action[i * a..(i + 1) * a].copy_from_slice(t.action);
        self.reward[i] = t.reward;
        self.next_obs[i * o..(i + 1) * o].copy_from_slice(t.next_obs);
        self.done[i] = t.done;
        self.head = (self.head + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = Transition<'_>> {
        let n = self.len();
        let start = if n < self.capacity { 0 } else { self.head };
        (0..n).map(move |k| self.get((start + k) % n))
    }

    fn get(&self, i: usize) -> Transition<'_> {
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            obs: &self.obs[i * o..(i + 1) * o],
            action: &self.action[i * a..(i + 1) * a],
            reward: self.reward[i],
            next_obs: &self.next_obs[i * o..(i + 1) * o],
            done: self.done[i],
        }
    }

    /// Uniform minibatch without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R, out: &mut TransitionBatch) -> Result<()> {
        if size == 0 || size > self.len() {
            return Err(Error::contract(alloc::format!("cannot draw {size} of {} stored transitions", self.len())));
        }
        out.len = size;
        out.obs.clear();
        out.action.clear();
        out.reward.clear();
        out.next_obs.clear();
        out.done.clear();
        for i in rand::seq::index::sample(rng, self.len(), size) {
            let t = self.get(i);
            out.obs.extend_from_slice(t.obs);
            out.action.extend_from_slice(t.action);
            out.reward.push(t.reward);
            out.next_obs.extend_from_slice(t.next_obs);
            out.done.push(if t.done { 1.0 } else { 0.0 });
        }
        Ok(())
    }
}
