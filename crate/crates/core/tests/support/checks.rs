//! Numerical checks shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semtx_core::config::ExperimentConfig;
use semtx_core::env::Environment;
use semtx_core::link::{self, Level};
use semtx_core::sac::policy::{self, ACTION_HALF, ACTION_MID, LOG_STD_MAX, LOG_STD_MIN};
use semtx_core::sac::{Mlp, SacConfig, SacLearner, TransitionBatch};
use semtx_core::skb::{nested_tx_order, SampleGenerator, World, WorldConfig};

pub const FD_STEP: f64 = 1e-5;
pub const OBS_DIM: usize = 12;
pub const BATCH: usize = 4;
/// Points closer than this to a ReLU kink, a critic tie or the log-std clamp
/// are skipped: the loss is not differentiable across them, and a stencil of
/// half-width `FD_STEP` moves pre-activations by far less than this.
pub const KINK_MARGIN: f64 = 1e-4;

pub fn tiny_config(hidden: usize) -> SacConfig {
    SacConfig { hidden_width: hidden, batch_size: BATCH, ..SacConfig::default() }
}

/// A learner with random weights, a random temperature, a warmed-up input
/// standardiser, and a random batch.
pub fn random_point(seed: u64, hidden: usize) -> (SacLearner, TransitionBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut learner = SacLearner::new(OBS_DIM, 1, tiny_config(hidden), seed).unwrap();
    learner.set_log_alpha(rng.random_range(-3.0..0.5));
    // Perturb the targets so they differ from the online critics.
    let (t1, t2) = learner.targets_mut();
    for p in t1.params_mut().iter_mut().chain(t2.params_mut()) {
        *p += rng.random_range(-0.1..0.1);
    }
    for _ in 0..8 {
        let o: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
        learner.observe(&o);
    }
    let mut batch = TransitionBatch { len: BATCH, ..TransitionBatch::default() };
    for _ in 0..BATCH {
        batch.obs.extend((0..OBS_DIM).map(|_| rng.random_range(-2.0..2.0)));
        batch.next_obs.extend((0..OBS_DIM).map(|_| rng.random_range(-2.0..2.0)));
        batch.action.push(rng.random_range(0.5..4.5));
        batch.reward.push(rng.random_range(-3.0..0.0));
        batch.done.push(if rng.random_bool(0.2) { 1.0 } else { 0.0 });
    }
    (learner, batch)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

fn central_difference(params: &mut [f64], mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let keep = params[i];
            params[i] = keep + FD_STEP;
            let up = loss(params);
            params[i] = keep - FD_STEP;
            let down = loss(params);
            params[i] = keep;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Worst relative error of both critic gradients at one random point.
pub fn critic_gradient_error(seed: u64, hidden: usize) -> Option<f64> {
    let (mut learner, batch) = random_point(seed, hidden);
    let noise = learner.draw_noise(BATCH);
    if !smooth_point(&learner, &batch, &noise.current) {
        return None;
    }
    let analytic = learner.critic_loss_and_grad(&batch, &noise.next);
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        let mut params = if which == 0 { learner.critics().0 } else { learner.critics().1 }.params().to_vec();
        let mut probe = learner.clone();
        let numeric = central_difference(&mut params, |p| {
            let (q1, q2) = probe.critics_mut();
            let net = if which == 0 { q1 } else { q2 };
            net.params_mut().copy_from_slice(p);
            let g = probe.critic_loss_and_grad(&batch, &noise.next);
            if which == 0 {
                g.j_q1
            } else {
                g.j_q2
            }
        });
        let a = if which == 0 { &analytic.grad_q1 } else { &analytic.grad_q2 };
        worst = worst.max(relative_error(a, &numeric));
    }
    Some(worst)
}

/// Relative error of the reparameterised policy gradient at one random point.
pub fn actor_gradient_error(seed: u64, hidden: usize) -> Option<f64> {
    let (mut learner, batch) = random_point(seed, hidden);
    let noise = learner.draw_noise(BATCH);
    if !smooth_point(&learner, &batch, &noise.current) {
        return None;
    }
    let analytic = learner.actor_loss_and_grad(&batch, &noise.current);
    let mut params = learner.policy().params().to_vec();
    let mut probe = learner.clone();
    let numeric = central_difference(&mut params, |p| {
        probe.policy_mut().params_mut().copy_from_slice(p);
        probe.actor_loss_and_grad(&batch, &noise.current).j_pi
    });
    Some(relative_error(&analytic.grad, &numeric))
}

/// Relative error of `dJ/d log α` at one random point.
pub fn temperature_gradient_error(seed: u64, hidden: usize) -> Option<f64> {
    let (mut learner, batch) = random_point(seed, hidden);
    let noise = learner.draw_noise(BATCH);
    let mean_logp = learner.actor_loss_and_grad(&batch, &noise.current).mean_log_prob;
    let (_, analytic) = learner.temperature_loss_and_grad(mean_logp);
    let mut p = [learner.log_alpha()];
    let numeric = central_difference(&mut p, |p| {
        learner.set_log_alpha(p[0]);
        learner.temperature_loss_and_grad(mean_logp).0
    });
    Some(relative_error(&[analytic], &numeric))
}

/// Walks seeds from `first` until `points` differentiable points were
/// checked. Returns the worst error and the number of skipped seeds.
pub fn worst_over_points(first: u64, points: usize, mut check: impl FnMut(u64) -> Option<f64>) -> (f64, usize) {
    let (mut worst, mut done, mut skipped) = (0.0f64, 0, 0);
    let mut seed = first;
    while done < points {
        match check(seed) {
            Some(e) => {
                worst = worst.max(e);
                done += 1;
            }
            None => skipped += 1,
        }
        seed += 1;
    }
    (worst, skipped)
}

/// Smallest |pre-activation| over the hidden units of `net`.
fn relu_margin(net: &Mlp, input: &[f64], batch: usize) -> f64 {
    let sizes = net.sizes();
    let params = net.params();
    let mut margin = f64::INFINITY;
    for b in 0..batch {
        let mut x = input[b * sizes[0]..(b + 1) * sizes[0]].to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let (w, bias) = (&params[off..off + n_in * n_out], &params[off + n_in * n_out..off + n_in * n_out + n_out]);
            off += n_in * n_out + n_out;
            let mut z = bias.to_vec();
            for i in 0..n_in {
                for j in 0..n_out {
                    z[j] += x[i] * w[i * n_out + j];
                }
            }
            if l + 2 < sizes.len() {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = z;
        }
    }
    margin
}

fn critic_rows(obs: &[f64], actions: &[f64]) -> Vec<f64> {
    obs.chunks(OBS_DIM)
        .zip(actions)
        .flat_map(|(o, a)| o.iter().copied().chain(std::iter::once((a - ACTION_MID) / ACTION_HALF)))
        .collect()
}

/// Whether every non-smooth point of the losses is at least `KINK_MARGIN`
/// away for this learner, batch and policy noise.
pub fn smooth_point(learner: &SacLearner, batch: &TransitionBatch, noise: &[f64]) -> bool {
    let mut obs = vec![0.0; batch.obs.len()];
    for (src, dst) in batch.obs.chunks(OBS_DIM).zip(obs.chunks_mut(OBS_DIM)) {
        learner.normalizer().apply(src, dst);
    }
    let (q1, q2) = learner.critics();
    let stored = critic_rows(&obs, &batch.action);
    if relu_margin(q1, &stored, batch.len) < KINK_MARGIN || relu_margin(q2, &stored, batch.len) < KINK_MARGIN {
        return false;
    }
    if relu_margin(learner.policy(), &obs, batch.len) < KINK_MARGIN {
        return false;
    }
    let mut sampled = Vec::with_capacity(batch.len);
    for (b, row) in obs.chunks(OBS_DIM).enumerate() {
        let out = learner.policy().predict(row);
        if (out[1] - LOG_STD_MIN).abs() < KINK_MARGIN || (out[1] - LOG_STD_MAX).abs() < KINK_MARGIN {
            return false;
        }
        sampled.push(policy::sample_dim(out[0], out[1], noise[b]).action);
    }
    let fresh = critic_rows(&obs, &sampled);
    if relu_margin(q1, &fresh, batch.len) < KINK_MARGIN || relu_margin(q2, &fresh, batch.len) < KINK_MARGIN {
        return false;
    }
    fresh.chunks(OBS_DIM + 1).all(|x| (q1.predict(x)[0] - q2.predict(x)[0]).abs() >= KINK_MARGIN)
}

/// Counts samples whose label-level loss grows when the transmitter
/// knowledge base grows along its nested chain. Returns (violations, checks).
pub fn kb_monotonicity_violations(seed: u64, samples: usize) -> (usize, usize) {
    let cfg = WorldConfig::default();
    let world = World::generate(seed, &cfg).unwrap();
    let order = nested_tx_order(&world);
    let kbs: Vec<_> = (1..=order.len()).map(|n| world.kb.with_tx_members(order[..n].to_vec()).unwrap()).collect();
    let mut generator = SampleGenerator::new(seed);
    let batch = generator.sample_batch(&world, samples, None).unwrap();
    let (mut violations, mut checks) = (0, 0);
    for (i, x) in batch.features.iter().enumerate() {
        let mut prev = f64::INFINITY;
        for kb in &kbs {
            let menu = link::build_menu(x, &world.tx, &world.rx, kb, 1e5, 32.0, i).unwrap();
            let l4 = menu.loss_of(Level::Label);
            if l4 > prev {
                violations += 1;
            }
            checks += 1;
            prev = l4;
        }
    }
    (violations, checks)
}

/// Environment bookkeeping under uniformly random actions.
#[derive(Debug, Clone, Copy)]
pub struct Bookkeeping {
    pub max_latency_error: f64,
    pub max_loss_error: f64,
    pub penalty_overlaps: usize,
    pub steps: usize,
}

pub fn bookkeeping(seed: u64, steps: usize) -> Bookkeeping {
    let cfg = ExperimentConfig::default();
    let world = Arc::new(World::generate(seed, &cfg.world).unwrap());
    let mut env = Environment::new(world, cfg.env_config()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Bookkeeping { max_latency_error: 0.0, max_loss_error: 0.0, penalty_overlaps: 0, steps: 0 };
    let mut episode = 0;
    'episodes: loop {
        env.reset(seed.wrapping_mul(1000) + episode).unwrap();
        episode += 1;
        let (mut sum_t, mut sum_l, mut n) = (0.0, 0.0, 0usize);
        loop {
            let action: Vec<f64> = (0..cfg.task.samples_per_slot).map(|_| rng.random_range(0.5..4.5)).collect();
            let step = env.step(&action).unwrap();
            for k in 0..step.record.levels.len() {
                sum_t += step.record.latencies[k];
                sum_l += step.record.losses[k];
                n += 1;
            }
            let (t, l) = (sum_t / n as f64, sum_l / n as f64);
            out.max_latency_error = out.max_latency_error.max((t - step.record.avg_latency_after).abs());
            out.max_loss_error = out.max_loss_error.max((l - step.record.avg_loss_after).abs());
            out.max_latency_error = out.max_latency_error.max((t - step.observation.avg_latency).abs());
            if step.reward.y1 * step.reward.y2 != 0.0 {
                out.penalty_overlaps += 1;
            }
            out.steps += 1;
            if out.steps >= steps {
                break 'episodes;
            }
            if step.done {
                break;
            }
        }
    }
    out
}
