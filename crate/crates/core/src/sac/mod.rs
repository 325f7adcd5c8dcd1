//! Soft actor-critic, written out by hand: a small dense network with manual
//! backpropagation, Adam, a replay ring, and the learner that ties them to
//! the environment.

mod adam;
mod learner;
mod mlp;
mod norm;
pub mod policy;
mod replay;
mod train;

pub use adam::Adam;
pub use learner::{
    ActorGrad, CriticGrad, LearnerCheckpoint, PolicyNoise, SacConfig, SacLearner, UpdateStats, CHECKPOINT_VERSION,
};
pub use mlp::{Mlp, MlpCache};
pub use norm::RunningNorm;
pub use replay::{ReplayStore, Transition, TransitionBatch};
pub use train::{eval_episode_seeds, train, EpochMetrics, Phase, TrainConfig, TrainHooks, TrainOutcome};
