//! Backbone learners: PPO for discrete and continuous control and
//! categorical distributional Q-learning (C51), plus their building blocks.

mod c51;
mod gae;
mod hooks;
mod policy;
mod ppo;
mod replay;

pub use c51::{
    c51_loss, c51_support, categorical_projection, epsilon_schedule, C51Agent, C51Config, C51Stats,
    CategoricalHead,
};
pub use gae::gae;
pub use hooks::{build_optimizer, clip_global_norm, Hooks, Torso};
pub use policy::{
    categorical_eval, categorical_sample, gaussian_entropy, gaussian_log_prob, gaussian_policy, log_softmax,
    softmax, CategoricalEval, GaussianEval,
};
pub use ppo::{
    normalize_advantages, ppo_loss, ActOutput, ActionSpace, PpoAgent, PpoCoefs, PpoConfig, PpoLoss,
    PpoLossInput, PpoStats, TrajectoryBatch, ADV_NORM_EPS,
};
pub use replay::{ReplayBuffer, Transitions};
