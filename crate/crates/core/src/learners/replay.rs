use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

/// Ring buffer of `(s, a, r, s', done)` transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
    len: usize,
}

/// A sampled minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    pub obs: Matrix,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 {
            return Err(Error::invalid("replay buffer needs capacity and obs_dim >= 1"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], action: usize, reward: f64, next_obs: &[f64], done: bool) -> Result<()> {
        if obs.len() != self.obs_dim || next_obs.len() != self.obs_dim {
            return Err(Error::invalid("transition has the wrong observation width"));
        }
        if self.len < self.capacity {
            self.obs.extend_from_slice(obs);
            self.next_obs.extend_from_slice(next_obs);
            self.actions.push(action);
            self.rewards.push(reward);
            self.dones.push(done);
            self.len += 1;
        } else {
            let c = self.cursor;
            let d = self.obs_dim;
            self.obs[c * d..(c + 1) * d].copy_from_slice(obs);
            self.next_obs[c * d..(c + 1) * d].copy_from_slice(next_obs);
            self.actions[c] = action;
            self.rewards[c] = reward;
            self.dones[c] = done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample with replacement; one stream word per index.
    pub fn sample(&self, batch: usize, rng: &mut RngStream) -> Result<Transitions> {
        if self.len == 0 {
            return Err(Error::invalid("cannot sample an empty replay buffer"));
        }
        let d = self.obs_dim;
        let idx: Vec<usize> = (0..batch).map(|_| rng.below(self.len)).collect();
        let gather = |src: &[f64]| {
            let mut out = Vec::with_capacity(batch * d);
            for &i in &idx {
                out.extend_from_slice(&src[i * d..(i + 1) * d]);
            }
            Matrix::from_vec(batch, d, out).expect("consistent width")
        };
        Ok(Transitions {
            obs: gather(&self.obs),
            next_obs: gather(&self.next_obs),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
        })
    }
}
