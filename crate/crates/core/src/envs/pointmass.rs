//! Point mass on a torus rewarded for moving at a target speed.

use crate::error::{Error, Result};
use crate::numkit::RngStream;

pub const DT: f64 = 0.05;
/// Half-width of the square arena; positions wrap to `[-ARENA, ARENA)`.
pub const ARENA: f64 = 1.0;
pub const ACTION_COST: f64 = 0.01;
pub const SPEED_WIDTH: f64 = 0.1;

/// Target speed of each named variant.
pub fn target_speed(variant: &str) -> Option<f64> {
    match variant {
        "stand" => Some(0.0),
        "walk" => Some(0.5),
        "run" => Some(1.0),
        "trot" => Some(0.75),
        _ => None,
    }
}

pub const VARIANTS: [&str; 4] = ["stand", "walk", "run", "trot"];

/// `exp(−(speed − target)²/0.1) − 0.01‖a‖²`.
pub fn pointmass_reward(velocity: [f64; 2], action: [f64; 2], target: f64) -> f64 {
    let speed = (velocity[0] * velocity[0] + velocity[1] * velocity[1]).sqrt();
    let d = speed - target;
    (-d * d / SPEED_WIDTH).exp() - ACTION_COST * (action[0] * action[0] + action[1] * action[1])
}

fn wrap(x: f64) -> f64 {
    (x + ARENA).rem_euclid(2.0 * ARENA) - ARENA
}

#[derive(Debug, Clone)]
pub struct Pointmass {
    pub target: f64,
    pos: [f64; 2],
    vel: [f64; 2],
    t: u64,
    horizon: u64,
    rng: RngStream,
}

impl Pointmass {
    pub fn new(variant: &str, horizon: u64, rng: RngStream) -> Result<Self> {
        let target = target_speed(variant)
            .ok_or_else(|| Error::Spec(format!("unknown pointmass variant `{variant}`")))?;
        if horizon == 0 {
            return Err(Error::Spec("horizon must be >= 1".into()));
        }
        Ok(Pointmass { target, pos: [0.0; 2], vel: [0.0; 2], t: 0, horizon, rng })
    }

    /// Changes the task variant in place, keeping the physical state.
    pub fn set_variant(&mut self, variant: &str) -> Result<()> {
        self.target = target_speed(variant)
            .ok_or_else(|| Error::Spec(format!("unknown pointmass variant `{variant}`")))?;
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        4
    }

    pub fn state(&self) -> [f64; 4] {
        [self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    pub fn set_state(&mut self, s: [f64; 4]) {
        self.pos = [wrap(s[0]), wrap(s[1])];
        self.vel = [s[2], s[3]];
    }

    /// Random position, zero velocity.
    pub fn reset(&mut self) -> Vec<f64> {
        self.pos = [self.rng.uniform(-ARENA, ARENA), self.rng.uniform(-ARENA, ARENA)];
        self.vel = [0.0; 2];
        self.t = 0;
        self.state().to_vec()
    }

    /// Unit-mass Euler step with the action as force. Returns
    /// `(obs, reward, terminated, truncated)`; episodes only truncate.
    pub fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool, bool)> {
        if action.len() != 2 || action.iter().any(|a| !(a.abs() <= 1.0)) {
            return Err(Error::invalid(format!("pointmass action {action:?} outside [-1, 1]^2")));
        }
        let a = [action[0], action[1]];
        for i in 0..2 {
            self.vel[i] += DT * a[i];
            self.pos[i] = wrap(self.pos[i] + DT * self.vel[i]);
        }
        self.t += 1;
        let reward = pointmass_reward(self.vel, a, self.target);
        Ok((self.state().to_vec(), reward, false, self.t >= self.horizon))
    }
}
