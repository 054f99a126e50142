//! Desk-scale environments and the non-stationarity schedules that drive
//! them: a procedurally generated gridworld (discrete actions), a point
//! mass with target-speed variants (continuous actions), and a supervised
//! permuted-teacher probe.

mod gridworld;
mod pointmass;
mod probe;
mod schedule;
mod wrappers;

pub use gridworld::{
    Cell, Gridworld, Layout, GOAL_REWARD, GRID_ACTIONS, GRID_CHANNELS, HAZARD_REWARD, STEP_COST,
};
pub use pointmass::{pointmass_reward, target_speed, Pointmass, DT, VARIANTS};
pub use probe::{mse, ProbeTask};
pub use schedule::{ScenarioMode, ScenarioSchedule};
pub use wrappers::{FrameStack, RewardNormalizer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::ActionSpace;
use crate::numkit::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gridworld,
    Pointmass,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub family: Family,
    pub level_seed: u64,
    /// Pointmass speed profile; unused by the other families.
    pub variant: String,
    pub horizon: u64,
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone)]
pub enum Env {
    Grid(Gridworld),
    // boxed: the point mass carries its own RNG stream
    Point(Box<Pointmass>),
}

impl Env {
    /// Builds the environment for an RL task. `rng` drives any
    /// per-episode randomness (pointmass start positions).
    pub fn make(spec: &TaskSpec, grid_size: usize, rng: RngStream) -> Result<Env> {
        match spec.family {
            Family::Gridworld => Ok(Env::Grid(Gridworld::new(grid_size, spec.level_seed, spec.horizon)?)),
            Family::Pointmass => Ok(Env::Point(Box::new(Pointmass::new(&spec.variant, spec.horizon, rng)?))),
            Family::Probe => Err(Error::Spec("the probe family is supervised, not an RL environment".into())),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Grid(g) => g.obs_dim(),
            Env::Point(p) => p.obs_dim(),
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Grid(_) => ActionSpace::Discrete(GRID_ACTIONS),
            Env::Point(_) => ActionSpace::Continuous(2),
        }
    }

    pub fn reset(&mut self) -> Vec<f64> {
        match self {
            Env::Grid(g) => g.reset(),
            Env::Point(p) => p.reset(),
        }
    }

    /// `action` holds the index for the gridworld and the force for the
    /// point mass.
    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let (obs, reward, terminated, truncated) = match self {
            Env::Grid(g) => {
                let a = action.first().copied().unwrap_or(f64::NAN);
                if a.fract() != 0.0 || !(a >= 0.0) {
                    return Err(Error::invalid(format!("gridworld action {a} is not an index")));
                }
                g.step(a as usize)?
            }
            Env::Point(p) => p.step(action)?,
        };
        Ok(Transition { obs, reward, terminated, truncated })
    }
}
