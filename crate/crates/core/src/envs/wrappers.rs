use std::collections::VecDeque;

/// Concatenates the last `k` observations, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    k: usize,
    frames: VecDeque<Vec<f64>>,
}

impl FrameStack {
    pub fn new(k: usize) -> Self {
        FrameStack { k: k.max(1), frames: VecDeque::new() }
    }

    pub fn depth(&self) -> usize {
        self.k
    }

    /// Fills the stack with copies of the first observation.
    pub fn reset(&mut self, obs: &[f64]) -> Vec<f64> {
        self.frames.clear();
        for _ in 0..self.k {
            self.frames.push_back(obs.to_vec());
        }
        self.stacked()
    }

    pub fn push(&mut self, obs: &[f64]) -> Vec<f64> {
        if self.frames.is_empty() {
            return self.reset(obs);
        }
        self.frames.pop_front();
        self.frames.push_back(obs.to_vec());
        self.stacked()
    }

    fn stacked(&self) -> Vec<f64> {
        self.frames.iter().flatten().copied().collect()
    }
}

/// Divides rewards by a running standard deviation of the discounted
/// return, then clips.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNormalizer {
    gamma: f64,
    ret: f64,
    mean: f64,
    var: f64,
    count: f64,
    clip: f64,
}

impl RewardNormalizer {
    pub fn new(gamma: f64) -> Self {
        RewardNormalizer { gamma, ret: 0.0, mean: 0.0, var: 1.0, count: 1e-4, clip: 10.0 }
    }

    pub fn normalize(&mut self, reward: f64, done: bool) -> f64 {
        self.ret = self.ret * self.gamma + reward;
        // Chan et al. parallel update with a batch of one
        let delta = self.ret - self.mean;
        let total = self.count + 1.0;
        self.mean += delta / total;
        let m2 = self.var * self.count + delta * delta * self.count / total;
        self.var = m2 / total;
        self.count = total;
        if done {
            self.ret = 0.0;
        }
        (reward / (self.var + 1e-8).sqrt()).clamp(-self.clip, self.clip)
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}
