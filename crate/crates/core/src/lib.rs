//! Multi-level feature transmission between a moving transmitter and an edge
//! receiver, each holding its own semantic knowledge base.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! the command line, or wall-clock time lives in the `semtx` companion crate.
//!
//! Layout:
//!  * [`skb`]: semantic knowledge bases, endpoint feature extractors and the
//!    synthetic world generator that stands in for a real image dataset.
//!  * [`channel`]: path-loss rate model and the random-velocity mobility walk.
//!  * [`link`]: the per-sample four-level loss/latency menu.
//!  * [`env`]: the slot-by-slot decision process with the latency-penalised reward.
//!  * [`sac`]: a from-scratch soft actor-critic learner.
//!  * [`baselines`]: loss-first and latency-first greedy policies, and the exact
//!    offline optimum for short horizons.
//!  * [`config`]: the experiment configuration tree and its validation.
//!  * [`eval`]: rollouts that score any policy on held-out episodes.
#![no_std]
// `!(x > 0.0)` also rejects NaN; index loops mirror the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod channel;
pub mod config;
pub mod env;
mod error;
pub mod eval;
pub mod link;
pub mod math;
pub mod rng;
pub mod sac;
pub mod skb;

pub use error::{Error, Result};
