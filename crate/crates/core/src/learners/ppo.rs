//! Proximal policy optimization with separate actor and critic networks.

use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::hooks::{build_optimizer, clip_global_norm, Hooks, Torso};
use super::policy::{categorical_eval, categorical_sample, gaussian_log_prob, gaussian_policy};
use crate::error::{Error, Result};
use crate::mitigations::optim::SliceAdam;
use crate::mitigations::{MitigationPlan, OptimizerState};
use crate::net::{ForwardTrace, Gradients, NetworkState};
use crate::numkit::{Matrix, RngStream};

/// Epsilon added to the advantage standard deviation.
pub const ADV_NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "n", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Width of the stored action row (1 for discrete actions).
    pub fn stored_dim(self) -> usize {
        match self {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Continuous(d) => d,
        }
    }

    /// Width of the actor's output.
    pub fn head_dim(self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

/// Rollout storage collected under the current policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    obs_dim: usize,
    act_dim: usize,
    observations: Vec<f64>,
    actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        TrajectoryBatch {
            obs_dim,
            act_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, done: bool, log_prob: f64, value: f64) -> Result<()> {
        if obs.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(Error::invalid("trajectory row has the wrong width"));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite { what: "reward".into(), layer: 0 });
        }
        self.observations.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.dones.push(done);
        self.log_probs.push(log_prob);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.rewards.clear();
        self.dones.clear();
        self.log_probs.clear();
        self.values.clear();
    }

    pub fn observations(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.obs_dim, self.observations.clone()).expect("consistent rows")
    }

    pub fn actions(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.act_dim, self.actions.clone()).expect("consistent rows")
    }
}

/// Per-sample quantities entering the clipped PPO objective.
#[derive(Debug, Clone, Copy)]
pub struct PpoLossInput<'a> {
    pub old_log_probs: &'a [f64],
    pub new_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
    pub old_values: &'a [f64],
    pub new_values: &'a [f64],
    pub entropy: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoCoefs {
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    /// Clip range for the value update; `None` disables it.
    pub value_clip: Option<f64>,
    pub normalize_advantages: bool,
}

/// Loss value, components, and the derivative of `total` w.r.t. each
/// per-sample input.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub d_new_log_probs: Vec<f64>,
    pub d_new_values: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

/// Normalizes to mean 0 and (population) standard deviation 1.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + ADV_NORM_EPS)).collect()
}

/// `total = policy + vf_coef·value − ent_coef·entropy` with
/// `policy = −mean(min(ρA, clip(ρ, 1−ε, 1+ε)A))` and
/// `value = mean(max((v−R)², (v_clip−R)²))`.
pub fn ppo_loss(input: &PpoLossInput<'_>, coefs: &PpoCoefs) -> Result<PpoLoss> {
    let n = input.old_log_probs.len();
    let lens = [
        input.new_log_probs.len(),
        input.advantages.len(),
        input.returns.len(),
        input.old_values.len(),
        input.new_values.len(),
        input.entropy.len(),
    ];
    if n == 0 || lens.iter().any(|&l| l != n) {
        return Err(Error::invalid("ppo loss inputs must be non-empty and equally long"));
    }
    if !(coefs.clip_eps > 0.0) {
        return Err(Error::invalid("clip_eps must be positive"));
    }
    let adv = if coefs.normalize_advantages {
        normalize_advantages(input.advantages)
    } else {
        input.advantages.to_vec()
    };
    let inv_n = 1.0 / n as f64;
    let (lo, hi) = (1.0 - coefs.clip_eps, 1.0 + coefs.clip_eps);
    let mut out = PpoLoss {
        total: 0.0,
        policy: 0.0,
        value: 0.0,
        entropy: 0.0,
        approx_kl: 0.0,
        clip_fraction: 0.0,
        d_new_log_probs: vec![0.0; n],
        d_new_values: vec![0.0; n],
        d_entropy: vec![-coefs.ent_coef * inv_n; n],
    };
    for t in 0..n {
        let log_ratio = input.new_log_probs[t] - input.old_log_probs[t];
        let ratio = log_ratio.exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite { what: "probability ratio".into(), layer: 0 });
        }
        let a = adv[t];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(lo, hi) * a;
        if unclipped <= clipped {
            out.policy -= unclipped;
            out.d_new_log_probs[t] = -unclipped * inv_n;
        } else {
            out.policy -= clipped;
        }
        if ratio < lo || ratio > hi {
            out.clip_fraction += 1.0;
        }
        out.approx_kl += (ratio - 1.0) - log_ratio;

        let (v, r, v_old) = (input.new_values[t], input.returns[t], input.old_values[t]);
        let err = v - r;
        match coefs.value_clip {
            Some(c) => {
                let delta = v - v_old;
                let v_clip = v_old + delta.clamp(-c, c);
                let err_c = v_clip - r;
                if err * err >= err_c * err_c {
                    out.value += err * err;
                    out.d_new_values[t] = 2.0 * err;
                } else {
                    out.value += err_c * err_c;
                    out.d_new_values[t] = if delta.abs() < c { 2.0 * err_c } else { 0.0 };
                }
            }
            None => {
                out.value += err * err;
                out.d_new_values[t] = 2.0 * err;
            }
        }
        out.d_new_values[t] *= coefs.vf_coef * inv_n;
        out.entropy += input.entropy[t];
    }
    out.policy *= inv_n;
    out.value *= inv_n;
    out.entropy *= inv_n;
    out.approx_kl *= inv_n;
    out.clip_fraction *= inv_n;
    out.total = out.policy + coefs.vf_coef * out.value - coefs.ent_coef * out.entropy;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub value_clip: Option<f64>,
    pub max_grad_norm: f64,
    pub minibatches: usize,
    pub epochs: usize,
    pub rollout_len: usize,
    pub init_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 1e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.01,
            value_clip: Some(0.2),
            max_grad_norm: 0.5,
            minibatches: 8,
            epochs: 4,
            rollout_len: 1000,
            init_std: 1.0,
        }
    }
}

/// One environment-facing decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    /// Stored action row: the index for discrete spaces, the raw Gaussian
    /// sample for continuous ones.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub reg_loss: f64,
    pub grad_norm: f64,
    pub updates: u64,
}

pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub space: ActionSpace,
    pub actor: NetworkState,
    pub critic: NetworkState,
    pub log_std: Vec<f64>,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    log_std_opt: SliceAdam,
    /// Gradients of the most recent minibatch (before clipping).
    pub last_actor_grads: Option<Gradients>,
    pub last_critic_grads: Option<Gradients>,
}

impl PpoAgent {
    pub fn new(
        cfg: PpoConfig,
        space: ActionSpace,
        obs_dim: usize,
        torso: &Torso,
        plan: &MitigationPlan,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if cfg.minibatches == 0 || cfg.epochs == 0 || cfg.rollout_len < cfg.minibatches {
            return Err(Error::Config("ppo needs epochs >= 1 and rollout_len >= minibatches >= 1".into()));
        }
        if !(cfg.init_std > 0.0) {
            return Err(Error::Config("ppo init_std must be positive".into()));
        }
        let torso = torso.clone().with_plan(plan);
        let actor = torso.build(obs_dim, space.head_dim(), 0.01, rng)?;
        let critic = torso.build(obs_dim, 1, 1.0, rng)?;
        let d = match space {
            ActionSpace::Continuous(d) => d,
            ActionSpace::Discrete(_) => 0,
        };
        Ok(PpoAgent {
            actor_opt: build_optimizer(plan, &actor, cfg.lr),
            critic_opt: build_optimizer(plan, &critic, cfg.lr),
            log_std: vec![cfg.init_std.ln(); d],
            log_std_opt: SliceAdam::new(d),
            cfg,
            space,
            actor,
            critic,
            last_actor_grads: None,
            last_critic_grads: None,
        })
    }

    pub fn act(&self, obs: &[f64], rng: &mut RngStream) -> Result<ActOutput> {
        let x = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        let head = self.actor.predict(&x)?;
        let value = self.critic.predict(&x)?.get(0, 0);
        let (action, log_prob) = match self.space {
            ActionSpace::Discrete(_) => {
                let a = categorical_sample(head.row(0), rng);
                (vec![a as f64], categorical_eval(head.row(0), a).log_prob)
            }
            ActionSpace::Continuous(_) => {
                let (a, lp, _) = gaussian_policy(head.row(0), &self.log_std, rng);
                (a, lp)
            }
        };
        if !value.is_finite() || !log_prob.is_finite() {
            return Err(Error::NonFinite { what: "policy output".into(), layer: 0 });
        }
        Ok(ActOutput { action, log_prob, value })
    }

    /// Deterministic action: argmax logits or the Gaussian mean.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        let head = self.actor.predict(&x)?;
        Ok(match self.space {
            ActionSpace::Discrete(_) => {
                let row = head.row(0);
                let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                vec![best as f64]
            }
            ActionSpace::Continuous(_) => head.row(0).to_vec(),
        })
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let x = Matrix::from_vec(1, obs.len(), obs.to_vec())?;
        Ok(self.critic.predict(&x)?.get(0, 0))
    }

    pub fn reset_optimizers(&mut self) {
        self.actor_opt.reset(&self.actor);
        self.critic_opt.reset(&self.critic);
        self.log_std_opt = SliceAdam::new(self.log_std.len());
    }

    /// Several epochs of minibatch updates on a full rollout.
    pub fn update(
        &mut self,
        batch: &TrajectoryBatch,
        bootstrap_value: f64,
        hooks: &mut Hooks,
        rng: &mut RngStream,
    ) -> Result<PpoStats> {
        let n = batch.len();
        if n < self.cfg.minibatches {
            return Err(Error::invalid("rollout shorter than the minibatch count"));
        }
        let (adv, returns) = gae(&batch.rewards, &batch.values, &batch.dones, bootstrap_value, self.cfg.gamma, self.cfg.gae_lambda)?;
        let obs = batch.observations();
        let actions = batch.actions();
        let mb_size = n / self.cfg.minibatches;
        let mut idx: Vec<usize> = (0..n).collect();
        let mut stats = PpoStats::default();
        for _ in 0..self.cfg.epochs {
            rng.shuffle(&mut idx);
            for mb in idx.chunks_exact(mb_size).take(self.cfg.minibatches) {
                let s = self.minibatch_step(mb, &obs, &actions, batch, &adv, &returns, hooks)?;
                stats.policy_loss = s.policy_loss;
                stats.value_loss = s.value_loss;
                stats.entropy = s.entropy;
                stats.approx_kl = s.approx_kl;
                stats.clip_fraction = s.clip_fraction;
                stats.reg_loss = s.reg_loss;
                stats.grad_norm = s.grad_norm;
                stats.updates += 1;
            }
        }
        Ok(stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn minibatch_step(
        &mut self,
        mb: &[usize],
        obs: &Matrix,
        actions: &Matrix,
        batch: &TrajectoryBatch,
        adv: &[f64],
        returns: &[f64],
        hooks: &mut Hooks,
    ) -> Result<PpoStats> {
        let x = obs.select_rows(mb);
        let a = actions.select_rows(mb);
        let actor_trace = self.actor.forward(&x)?;
        let critic_trace = self.critic.forward(&x)?;
        let b = mb.len();
        let head = &actor_trace.output;
        let mut new_lp = Vec::with_capacity(b);
        let mut ent = Vec::with_capacity(b);
        let mut dlp_dhead = Vec::with_capacity(b);
        let mut dent_dhead = Vec::with_capacity(b);
        let mut dlp_dls = Vec::with_capacity(b);
        for r in 0..b {
            match self.space {
                ActionSpace::Discrete(_) => {
                    let e = categorical_eval(head.row(r), a.get(r, 0) as usize);
                    new_lp.push(e.log_prob);
                    ent.push(e.entropy);
                    dlp_dhead.push(e.d_log_prob);
                    dent_dhead.push(e.d_entropy);
                }
                ActionSpace::Continuous(_) => {
                    let e = gaussian_log_prob(head.row(r), &self.log_std, a.row(r));
                    new_lp.push(e.log_prob);
                    ent.push(e.entropy);
                    dlp_dhead.push(e.d_log_prob_mean);
                    dlp_dls.push(e.d_log_prob_log_std);
                }
            }
        }
        let new_values: Vec<f64> = critic_trace.output.column(0);
        let pick = |v: &[f64]| mb.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let (old_lp, mb_adv, mb_ret, old_v) = (pick(&batch.log_probs), pick(adv), pick(returns), pick(&batch.values));
        let loss = ppo_loss(
            &PpoLossInput {
                old_log_probs: &old_lp,
                new_log_probs: &new_lp,
                advantages: &mb_adv,
                returns: &mb_ret,
                old_values: &old_v,
                new_values: &new_values,
                entropy: &ent,
            },
            &PpoCoefs {
                clip_eps: self.cfg.clip_eps,
                vf_coef: self.cfg.vf_coef,
                ent_coef: self.cfg.ent_coef,
                value_clip: self.cfg.value_clip,
                normalize_advantages: true,
            },
        )?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite { what: "ppo loss".into(), layer: 0 });
        }

        let k = self.space.head_dim();
        let mut g_head = Matrix::zeros(b, k);
        let mut g_log_std = vec![0.0; self.log_std.len()];
        for r in 0..b {
            let row = g_head.row_mut(r);
            for i in 0..k {
                row[i] = loss.d_new_log_probs[r] * dlp_dhead[r][i];
                if let ActionSpace::Discrete(_) = self.space {
                    row[i] += loss.d_entropy[r] * dent_dhead[r][i];
                }
            }
            if let ActionSpace::Continuous(_) = self.space {
                for (g, d) in g_log_std.iter_mut().zip(&dlp_dls[r]) {
                    // d entropy / d log_std = 1
                    *g += loss.d_new_log_probs[r] * d + loss.d_entropy[r];
                }
            }
        }
        let g_value = Matrix::from_vec(b, 1, loss.d_new_values.clone())?;
        let mut ga = self.actor.backward(&actor_trace, &g_head)?;
        let mut gc = self.critic.backward(&critic_trace, &g_value)?;
        let reg = hooks.regularize(&self.actor, &mut ga)? + hooks.regularize(&self.critic, &mut gc)?;
        let grad_norm = clip_global_norm(&mut [&mut ga, &mut gc], &mut g_log_std, self.cfg.max_grad_norm);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite { what: "gradient".into(), layer: 0 });
        }
        self.actor_opt.step(&mut self.actor, Some(&actor_trace), &ga)?;
        self.critic_opt.step(&mut self.critic, Some(&critic_trace), &gc)?;
        if !self.log_std.is_empty() {
            self.log_std_opt.step(&mut self.log_std, &g_log_std, self.cfg.lr)?;
        }
        hooks.after_step(&mut [&mut self.actor, &mut self.critic])?;
        self.last_actor_grads = Some(ga);
        self.last_critic_grads = Some(gc);
        Ok(PpoStats {
            policy_loss: loss.policy,
            value_loss: loss.value,
            entropy: loss.entropy,
            approx_kl: loss.approx_kl,
            clip_fraction: loss.clip_fraction,
            reg_loss: reg,
            grad_norm,
            updates: 1,
        })
    }

    /// Actor trace on a probe batch, used by diagnostics.
    pub fn actor_trace(&self, probe: &Matrix) -> Result<ForwardTrace> {
        self.actor.forward(probe)
    }
}
