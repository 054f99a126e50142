//! Categorical distributional Q-learning (C51).

use serde::{Deserialize, Serialize};

use super::hooks::{build_optimizer, Hooks, Torso};
use super::policy::{log_softmax, softmax};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::mitigations::{MitigationPlan, OptimizerState};
use crate::net::{Gradients, NetworkState};
use crate::numkit::{Matrix, RngStream};

/// `n` evenly spaced atoms from `v_min` to `v_max`, both endpoints exact.
pub fn c51_support(v_min: f64, v_max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
        return Err(Error::invalid(format!("bad support: n={n}, [{v_min}, {v_max}]")));
    }
    let dz = (v_max - v_min) / (n - 1) as f64;
    let mut z: Vec<f64> = (0..n).map(|i| v_min + i as f64 * dz).collect();
    z[n - 1] = v_max;
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHead {
    pub v_min: f64,
    pub v_max: f64,
    atoms: Vec<f64>,
}

impl CategoricalHead {
    pub fn new(v_min: f64, v_max: f64, n_atoms: usize) -> Result<Self> {
        Ok(CategoricalHead { v_min, v_max, atoms: c51_support(v_min, v_max, n_atoms)? })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms.len() - 1) as f64
    }

    /// `Σ z_i p_i`.
    pub fn expectation(&self, probs: &[f64]) -> f64 {
        self.atoms.iter().zip(probs).map(|(z, p)| z * p).sum()
    }
}

/// Projects the distributional Bellman target `r + γ(1−done)z` back onto
/// the support, splitting each atom's mass between its two neighbours.
pub fn categorical_projection(
    next_dist: &[f64],
    reward: f64,
    done: bool,
    gamma: f64,
    head: &CategoricalHead,
) -> Result<Vec<f64>> {
    let n = head.n_atoms();
    if next_dist.len() != n {
        return Err(Error::invalid("next distribution length differs from the support"));
    }
    let total: f64 = next_dist.iter().sum();
    if next_dist.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("next distribution is not a probability vector (sum {total})")));
    }
    let dz = head.delta();
    let discount = if done { 0.0 } else { gamma };
    let mut m = vec![0.0; n];
    for (z, p) in head.atoms().iter().zip(next_dist) {
        let tz = (reward + discount * z).clamp(head.v_min, head.v_max);
        let b = ((tz - head.v_min) / dz).clamp(0.0, (n - 1) as f64);
        let (l, u) = (b.floor() as usize, b.ceil() as usize);
        if l == u {
            m[l] += p;
        } else {
            m[l] += p * (u as f64 - b);
            m[u] += p * (b - l as f64);
        }
    }
    Ok(m)
}

/// Cross-entropy `−Σ m_i log softmax(logits)_i` and its logit gradient
/// `softmax(logits) − m`.
pub fn c51_loss(m: &[f64], logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    if m.len() != logits.len() {
        return Err(Error::invalid("target and logits differ in length"));
    }
    let lp = log_softmax(logits);
    let loss = -m.iter().zip(&lp).map(|(mi, li)| mi * li).sum::<f64>();
    let grad = lp.iter().zip(m).map(|(li, mi)| li.exp() - mi).collect();
    Ok((loss, grad))
}

/// Linear decay from `start` to `end` over `fraction·total` steps.
pub fn epsilon_schedule(step: u64, start: f64, end: f64, fraction: f64, total: u64) -> f64 {
    let duration = fraction * total as f64;
    if duration <= 0.0 {
        return end;
    }
    let slope = (end - start) / duration;
    let e = start + slope * step as f64;
    if start >= end {
        e.max(end)
    } else {
        e.min(end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C51Config {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub target_freq: u64,
    pub learning_starts: u64,
    pub train_freq: u64,
    pub n_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub buffer_size: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub exploration_fraction: f64,
    /// Choose the greedy next action with the online network instead of
    /// the target network.
    pub online_selection: bool,
}

impl Default for C51Config {
    fn default() -> Self {
        C51Config {
            lr: 2.5e-4,
            gamma: 0.99,
            batch_size: 32,
            target_freq: 10_000,
            learning_starts: 80_000,
            train_freq: 4,
            n_atoms: 51,
            v_min: -10.0,
            v_max: 10.0,
            buffer_size: 1_000_000,
            eps_start: 1.0,
            eps_end: 0.01,
            exploration_fraction: 0.1,
            online_selection: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct C51Stats {
    pub loss: f64,
    pub reg_loss: f64,
    pub grad_norm: f64,
}

pub struct C51Agent {
    pub cfg: C51Config,
    pub head: CategoricalHead,
    pub n_actions: usize,
    pub online: NetworkState,
    pub target: NetworkState,
    pub opt: OptimizerState,
    pub buffer: ReplayBuffer,
    pub last_grads: Option<Gradients>,
    pub target_syncs: u64,
}

impl C51Agent {
    pub fn new(
        cfg: C51Config,
        obs_dim: usize,
        n_actions: usize,
        torso: &Torso,
        plan: &MitigationPlan,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.train_freq == 0 || cfg.target_freq == 0 {
            return Err(Error::Config("c51 batch_size, train_freq and target_freq must be >= 1".into()));
        }
        if !(cfg.exploration_fraction > 0.0 && cfg.exploration_fraction <= 1.0) {
            return Err(Error::Config("exploration_fraction must lie in (0, 1]".into()));
        }
        let head = CategoricalHead::new(cfg.v_min, cfg.v_max, cfg.n_atoms)?;
        let torso = torso.clone().with_plan(plan);
        let online = torso.build(obs_dim, n_actions * cfg.n_atoms, 1.0, rng)?;
        Ok(C51Agent {
            opt: build_optimizer(plan, &online, cfg.lr),
            target: online.clone(),
            buffer: ReplayBuffer::new(cfg.buffer_size, obs_dim)?,
            head,
            n_actions,
            online,
            cfg,
            last_grads: None,
            target_syncs: 0,
        })
    }

    /// Expected return of each action for every row of `obs`.
    pub fn q_values(&self, net: &NetworkState, obs: &Matrix) -> Result<Matrix> {
        let out = net.predict(obs)?;
        let n = self.head.n_atoms();
        let mut q = Matrix::zeros(obs.rows(), self.n_actions);
        for r in 0..obs.rows() {
            for a in 0..self.n_actions {
                let p = softmax(&out.row(r)[a * n..(a + 1) * n]);
                q.set(r, a, self.head.expectation(&p));
            }
        }
        Ok(q)
    }

    pub fn greedy(&self, obs: &[f64]) -> Result<usize> {
        let x = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        let q = self.q_values(&self.online, &x)?;
        Ok(argmax(q.row(0)))
    }

    /// ε-greedy action. Draws one word for the coin and one more only when
    /// exploring.
    pub fn act(&self, obs: &[f64], epsilon: f64, rng: &mut RngStream) -> Result<usize> {
        if rng.uniform01() < epsilon {
            Ok(rng.below(self.n_actions))
        } else {
            self.greedy(obs)
        }
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.target_syncs += 1;
    }

    /// One gradient step on a replay minibatch. `None` until the buffer
    /// holds a full batch.
    pub fn update(&mut self, hooks: &mut Hooks, rng: &mut RngStream) -> Result<Option<C51Stats>> {
        if self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.cfg.batch_size, rng)?;
        let n = self.head.n_atoms();
        let b = self.cfg.batch_size;
        let next_logits = self.target.predict(&batch.next_obs)?;
        let selector = if self.cfg.online_selection {
            self.q_values(&self.online, &batch.next_obs)?
        } else {
            let mut q = Matrix::zeros(b, self.n_actions);
            for r in 0..b {
                for a in 0..self.n_actions {
                    q.set(r, a, self.head.expectation(&softmax(&next_logits.row(r)[a * n..(a + 1) * n])));
                }
            }
            q
        };
        let trace = self.online.forward(&batch.obs)?;
        let mut g_out = Matrix::zeros(b, self.n_actions * n);
        let mut loss = 0.0;
        for r in 0..b {
            let a_star = argmax(selector.row(r));
            let next_p = softmax(&next_logits.row(r)[a_star * n..(a_star + 1) * n]);
            let m = categorical_projection(&next_p, batch.rewards[r], batch.dones[r], self.cfg.gamma, &self.head)?;
            let a = batch.actions[r];
            let (l, g) = c51_loss(&m, &trace.output.row(r)[a * n..(a + 1) * n])?;
            loss += l / b as f64;
            for (dst, v) in g_out.row_mut(r)[a * n..(a + 1) * n].iter_mut().zip(g) {
                *dst = v / b as f64;
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite { what: "c51 loss".into(), layer: 0 });
        }
        let mut grads = self.online.backward(&trace, &g_out)?;
        let reg = hooks.regularize(&self.online, &mut grads)?;
        let grad_norm = grads.sum_squares().sqrt();
        self.opt.step(&mut self.online, Some(&trace), &grads)?;
        hooks.after_step(&mut [&mut self.online])?;
        self.last_grads = Some(grads);
        Ok(Some(C51Stats { loss, reg_loss: reg, grad_norm }))
    }
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_support() {
        let z = c51_support(-10.0, 10.0, 51).unwrap();
        assert_eq!(z[0], -10.0);
        assert_eq!(z[50], 10.0);
        let h = CategoricalHead::new(-10.0, 10.0, 51).unwrap();
        assert!((h.delta() - 0.4).abs() < 1e-15);
        assert_eq!(c51_support(1.0, 2.0, 2).unwrap(), vec![1.0, 2.0]);
        assert!(c51_support(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn terminal_aligned_point_mass() {
        let h = CategoricalHead::new(-2.0, 2.0, 5).unwrap();
        let m = categorical_projection(&[0.2; 5], 1.0, true, 0.99, &h).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn midpoint_split() {
        let h = CategoricalHead::new(-2.0, 2.0, 5).unwrap();
        let m = categorical_projection(&[0.0, 0.0, 1.0, 0.0, 0.0], 0.5, false, 0.0, &h).unwrap();
        assert!((m[2] - 0.5).abs() < 1e-12 && (m[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn epsilon_default_schedule() {
        let total = 10_000_000;
        assert_eq!(epsilon_schedule(0, 1.0, 0.01, 0.1, total), 1.0);
        assert_eq!(epsilon_schedule(1_000_000, 1.0, 0.01, 0.1, total), 0.01);
        assert_eq!(epsilon_schedule(5_000_000, 1.0, 0.01, 0.1, total), 0.01);
        assert!((epsilon_schedule(500_000, 1.0, 0.01, 0.1, total) - 0.505).abs() < 1e-12);
    }

    #[test]
    fn matching_distribution_gives_entropy() {
        let logits = [0.3, -1.0, 2.0];
        let p = softmax(&logits);
        let (l, g) = c51_loss(&p, &logits).unwrap();
        let h = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        assert!((l - h).abs() < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }
}
