//! Laboratory for measuring and mitigating plasticity loss in deep
//! reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: matrices, counter-based random streams, singular values, `erfi`.
//! * [`net`]: dense networks with manual backpropagation and checkpoints.
//! * [`metrics`]: dormancy, active fraction, spectral ranks, weight and gradient norms.
//! * [`mitigations`]: resets, normalization, regularizers and plasticity-aware optimizers.
//! * [`learners`]: PPO and categorical DQN (C51).
//! * [`envs`]: gridworld, point-mass and supervised probe tasks with non-stationary schedules.
//! * [`runner`]: configuration, the training loop, logging and the CLI backend.

// NaN-rejecting guards are written `!(x > 0.0)` on purpose, and the
// numeric kernels index several parallel buffers per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod envs;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod mitigations;
pub mod net;
pub mod numkit;
pub mod runner;

pub use error::{Error, Result};
