//! Experiment configuration: a TOML document with strict key checking,
//! per-scenario defaults for every omitted field, and
//! cross-field validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{target_speed, Family, ScenarioMode, ScenarioSchedule, TaskSpec};
use crate::error::{Error, Result};
use crate::learners::{C51Config, PpoConfig};
use crate::metrics::DEFAULT_TAU;
use crate::mitigations::{MitigationPlan, PlanEntry};
use crate::net::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Ppo,
    C51,
    /// Plain regression on the probe task (no RL).
    Supervised,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub mode: Option<ScenarioMode>,
    pub env: Option<Family>,
    pub segment_length: Option<u64>,
    pub n_tasks: Option<usize>,
    pub level_seed: Option<u64>,
    pub level_offset: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub horizon: Option<u64>,
    pub grid_size: Option<usize>,
    pub frame_stack: Option<usize>,
    pub reward_norm: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPpo {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub clip_eps: Option<f64>,
    pub vf_coef: Option<f64>,
    pub ent_coef: Option<f64>,
    /// Non-positive disables value clipping.
    pub value_clip: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub minibatches: Option<usize>,
    pub epochs: Option<usize>,
    pub rollout_len: Option<usize>,
    pub init_std: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawC51 {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub target_freq: Option<u64>,
    pub learning_starts: Option<u64>,
    pub train_freq: Option<u64>,
    pub n_atoms: Option<usize>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub buffer_size: Option<usize>,
    pub eps_start: Option<f64>,
    pub eps_end: Option<f64>,
    pub exploration_fraction: Option<f64>,
    pub online_selection: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSupervised {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub input_dim: Option<usize>,
    pub teacher_hidden: Option<usize>,
    pub output_dim: Option<usize>,
    pub teacher_seed: Option<u64>,
    pub eval_size: Option<usize>,
    pub adapt_window: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLogging {
    pub dir: Option<PathBuf>,
    pub metric_interval: Option<u64>,
    pub probe_batch: Option<usize>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCheckpoint {
    pub interval: Option<u64>,
}

/// The file format. Every field but `algo` may be omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub algo: Algo,
    pub total_steps: Option<u64>,
    #[serde(default)]
    pub scenario: RawScenario,
    #[serde(default)]
    pub network: RawNetwork,
    #[serde(default, skip_serializing_if = "toml_is_empty")]
    pub ppo: RawPpo,
    #[serde(default, skip_serializing_if = "toml_is_empty")]
    pub c51: RawC51,
    #[serde(default, skip_serializing_if = "toml_is_empty")]
    pub supervised: RawSupervised,
    #[serde(default, rename = "mitigation")]
    pub mitigations: Vec<PlanEntry>,
    #[serde(default)]
    pub logging: RawLogging,
    #[serde(default)]
    pub checkpoint: RawCheckpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mode: ScenarioMode,
    pub env: Family,
    pub segment_length: u64,
    pub n_tasks: usize,
    pub level_seed: u64,
    pub level_offset: u64,
    pub variants: Vec<String>,
    pub horizon: u64,
    pub grid_size: usize,
    pub frame_stack: usize,
    pub reward_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub input_dim: usize,
    pub teacher_hidden: usize,
    pub output_dim: usize,
    pub teacher_seed: u64,
    pub eval_size: usize,
    /// Steps after a task switch over which adaptation speed is measured.
    pub adapt_window: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggingConfig {
    pub dir: PathBuf,
    pub metric_interval: u64,
    pub probe_batch: usize,
    pub tau: f64,
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub algo: Algo,
    pub total_steps: u64,
    pub scenario: ScenarioConfig,
    pub network: NetworkConfig,
    pub ppo: Option<PpoConfig>,
    pub c51: Option<C51Config>,
    pub supervised: Option<SupervisedConfig>,
    /// Entries exactly as written in the file.
    pub mitigations: Vec<PlanEntry>,
    pub plan: MitigationPlan,
    pub logging: LoggingConfig,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
}

fn invalid(rule: impl Into<String>) -> Error {
    Error::Config(rule.into())
}

/// Parses TOML text with key-path error reporting, then resolves.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| invalid(format!("TOML syntax: {e}")))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| invalid(format!("at `{}`: {}", e.path(), e.inner())))?;
    resolve(raw)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Fills per-scenario defaults and checks
/// every cross-field rule.
pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig> {
    let s = &raw.scenario;
    let env = s.env.unwrap_or(match raw.algo {
        Algo::Supervised => Family::Probe,
        _ if s.mode == Some(ScenarioMode::TaskChain) => Family::Pointmass,
        _ => Family::Gridworld,
    });
    let mode = s.mode.unwrap_or(match raw.algo {
        Algo::Ppo if env == Family::Pointmass => ScenarioMode::TaskChain,
        Algo::Supervised => ScenarioMode::LevelShift,
        _ => ScenarioMode::Standard,
    });

    match (raw.algo, env) {
        (Algo::C51, Family::Gridworld) | (Algo::Ppo, Family::Gridworld | Family::Pointmass) => {}
        (Algo::Supervised, Family::Probe) => {}
        (Algo::C51, Family::Pointmass) => {
            return Err(invalid("c51 needs a discrete-action env; pointmass is continuous (use ppo)"))
        }
        (algo, family) => {
            return Err(invalid(format!("algo {algo:?} cannot run on env {family:?}")));
        }
    }
    match (mode, env) {
        (ScenarioMode::TaskChain, Family::Pointmass) => {}
        (ScenarioMode::TaskChain, _) => return Err(invalid("task_chain mode needs the pointmass env")),
        (ScenarioMode::LevelShift, Family::Pointmass) => {
            return Err(invalid("level_shift mode needs the gridworld or probe env"))
        }
        _ => {}
    }

    // desk-scale defaults: segments of 20k steps rather than millions
    let (table_segment, table_tasks): (u64, usize) = match (raw.algo, mode) {
        (Algo::Supervised, _) => (1_000, 20),
        (_, ScenarioMode::TaskChain) => (20_000, 4),
        _ => (20_000, 10),
    };
    let n_tasks = match mode {
        ScenarioMode::Standard => {
            if s.n_tasks.is_some_and(|n| n != 1) {
                return Err(invalid("standard mode has exactly one task; drop scenario.n_tasks"));
            }
            1
        }
        _ => s.n_tasks.unwrap_or(table_tasks),
    };
    if n_tasks == 0 {
        return Err(invalid("scenario.n_tasks must be >= 1"));
    }
    let segment_length = match mode {
        ScenarioMode::Standard => u64::MAX,
        _ => s.segment_length.unwrap_or(table_segment),
    };
    if segment_length == 0 {
        return Err(invalid("scenario.segment_length must be >= 1"));
    }
    let total_steps = raw.total_steps.unwrap_or(match (raw.algo, mode) {
        (Algo::C51, ScenarioMode::Standard) => 10_000_000,
        (_, ScenarioMode::Standard) => 1_000_000,
        _ => segment_length.saturating_mul(n_tasks as u64),
    });
    if total_steps == 0 {
        return Err(invalid("total_steps must be >= 1"));
    }
    let variants = s.variants.clone().unwrap_or_else(|| {
        if env == Family::Pointmass {
            crate::envs::VARIANTS.iter().map(|v| v.to_string()).collect()
        } else {
            Vec::new()
        }
    });
    if env == Family::Pointmass {
        if variants.is_empty() {
            return Err(invalid("scenario.variants must not be empty for pointmass"));
        }
        if let Some(v) = variants.iter().find(|v| target_speed(v).is_none()) {
            return Err(invalid(format!("unknown pointmass variant `{v}` (stand, walk, run, trot)")));
        }
    } else if s.variants.is_some() {
        return Err(invalid("scenario.variants only applies to the pointmass env"));
    }
    let horizon = s.horizon.unwrap_or(if env == Family::Pointmass { 1000 } else { 100 });
    if horizon == 0 {
        return Err(invalid("scenario.horizon must be >= 1"));
    }
    let grid_size = s.grid_size.unwrap_or(9);
    if grid_size < 4 {
        return Err(invalid("scenario.grid_size must be >= 4"));
    }
    let frame_stack = s.frame_stack.unwrap_or(if mode == ScenarioMode::LevelShift && raw.algo == Algo::Ppo { 4 } else { 1 });
    if frame_stack == 0 {
        return Err(invalid("scenario.frame_stack must be >= 1"));
    }
    if env == Family::Probe && (frame_stack != 1 || s.reward_norm == Some(true)) {
        return Err(invalid("frame_stack and reward_norm do not apply to the probe env"));
    }
    let scenario = ScenarioConfig {
        mode,
        env,
        segment_length,
        n_tasks,
        level_seed: s.level_seed.unwrap_or(0),
        level_offset: s.level_offset.unwrap_or(20),
        variants,
        horizon,
        grid_size,
        frame_stack,
        reward_norm: s.reward_norm.unwrap_or(raw.algo == Algo::Ppo),
    };

    let ppo = (raw.algo == Algo::Ppo).then(|| resolve_ppo(&raw.ppo, mode)).transpose()?;
    let c51 = (raw.algo == Algo::C51).then(|| resolve_c51(&raw.c51)).transpose()?;
    let supervised = (raw.algo == Algo::Supervised).then(|| resolve_supervised(&raw.supervised)).transpose()?;
    let unused = |used: bool, name: &str, empty: bool| {
        if !used && !empty {
            Err(invalid(format!("[{name}] given but algo is {:?}", raw.algo)))
        } else {
            Ok(())
        }
    };
    unused(ppo.is_some(), "ppo", toml_is_empty(&raw.ppo))?;
    unused(c51.is_some(), "c51", toml_is_empty(&raw.c51))?;
    unused(supervised.is_some(), "supervised", toml_is_empty(&raw.supervised))?;

    let plan = MitigationPlan::resolve(&raw.mitigations)?;
    let activation = match (raw.network.activation, plan.activation()) {
        (Some(a), Some(p)) if a != p => {
            return Err(invalid(format!(
                "network.activation {a:?} conflicts with the {p:?} activation method"
            )))
        }
        (Some(a), _) => a,
        (None, Some(p)) => p,
        (None, None) => Activation::Relu,
    };
    let hidden = raw.network.hidden.clone().unwrap_or_else(|| vec![256, 256, 256]);
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(invalid("network.hidden needs at least one non-zero width"));
    }

    let logging = LoggingConfig {
        dir: raw.logging.dir.clone().unwrap_or_else(|| PathBuf::from("runs")),
        metric_interval: raw.logging.metric_interval.unwrap_or(2000),
        probe_batch: raw.logging.probe_batch.unwrap_or(256),
        tau: raw.logging.tau.unwrap_or(DEFAULT_TAU),
    };
    if logging.metric_interval == 0 || logging.probe_batch == 0 {
        return Err(invalid("logging.metric_interval and logging.probe_batch must be >= 1"));
    }
    if !(logging.tau >= 0.0) {
        return Err(invalid("logging.tau must be >= 0"));
    }
    let checkpoint_interval = raw.checkpoint.interval.unwrap_or(0);
    if !checkpoint_interval.is_multiple_of(logging.metric_interval) {
        return Err(invalid("checkpoint.interval must be a multiple of logging.metric_interval"));
    }

    Ok(ExperimentConfig {
        name: raw.name.clone().unwrap_or_else(|| "experiment".into()),
        seed: raw.seed.unwrap_or(1),
        algo: raw.algo,
        total_steps,
        scenario,
        network: NetworkConfig { hidden, activation },
        ppo,
        c51,
        supervised,
        mitigations: resolved_entries(&plan),
        plan,
        logging,
        checkpoint_interval,
    })
}

fn toml_is_empty<T: Serialize>(v: &T) -> bool {
    serde_json::to_value(v)
        .map(|j| j.as_object().is_some_and(|o| o.values().all(|x| x.is_null())))
        .unwrap_or(false)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn unit(name: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn resolve_ppo(r: &RawPpo, mode: ScenarioMode) -> Result<PpoConfig> {
    let chain = mode == ScenarioMode::TaskChain;
    let value_clip = r.value_clip.unwrap_or(0.2);
    let cfg = PpoConfig {
        lr: positive("ppo.lr", r.lr.unwrap_or(if chain { 3e-4 } else { 1e-3 }))?,
        gamma: unit("ppo.gamma", r.gamma.unwrap_or(0.99))?,
        gae_lambda: unit("ppo.gae_lambda", r.gae_lambda.unwrap_or(0.95))?,
        clip_eps: positive("ppo.clip_eps", r.clip_eps.unwrap_or(0.2))?,
        vf_coef: r.vf_coef.unwrap_or(0.5),
        ent_coef: r.ent_coef.unwrap_or(if chain { 0.0 } else { 0.01 }),
        value_clip: (value_clip > 0.0).then_some(value_clip),
        max_grad_norm: r.max_grad_norm.unwrap_or(0.5),
        minibatches: r.minibatches.unwrap_or(if chain { 32 } else { 8 }),
        epochs: r.epochs.unwrap_or(4),
        rollout_len: r.rollout_len.unwrap_or(if chain { 2048 } else { 1000 }),
        init_std: positive("ppo.init_std", r.init_std.unwrap_or(1.0))?,
    };
    if cfg.vf_coef < 0.0 || cfg.ent_coef < 0.0 || cfg.max_grad_norm < 0.0 {
        return Err(invalid("ppo.vf_coef, ppo.ent_coef and ppo.max_grad_norm must be >= 0"));
    }
    if cfg.minibatches == 0 || cfg.epochs == 0 || cfg.rollout_len < cfg.minibatches {
        return Err(invalid("ppo needs epochs >= 1 and rollout_len >= minibatches >= 1"));
    }
    Ok(cfg)
}

fn resolve_c51(r: &RawC51) -> Result<C51Config> {
    let d = C51Config::default();
    let cfg = C51Config {
        lr: positive("c51.lr", r.lr.unwrap_or(d.lr))?,
        gamma: unit("c51.gamma", r.gamma.unwrap_or(d.gamma))?,
        batch_size: r.batch_size.unwrap_or(d.batch_size),
        target_freq: r.target_freq.unwrap_or(d.target_freq),
        learning_starts: r.learning_starts.unwrap_or(d.learning_starts),
        train_freq: r.train_freq.unwrap_or(d.train_freq),
        n_atoms: r.n_atoms.unwrap_or(d.n_atoms),
        v_min: r.v_min.unwrap_or(d.v_min),
        v_max: r.v_max.unwrap_or(d.v_max),
        buffer_size: r.buffer_size.unwrap_or(d.buffer_size),
        eps_start: unit("c51.eps_start", r.eps_start.unwrap_or(d.eps_start))?,
        eps_end: unit("c51.eps_end", r.eps_end.unwrap_or(d.eps_end))?,
        exploration_fraction: r.exploration_fraction.unwrap_or(d.exploration_fraction),
        online_selection: r.online_selection.unwrap_or(d.online_selection),
    };
    if cfg.batch_size == 0 || cfg.target_freq == 0 || cfg.train_freq == 0 || cfg.buffer_size == 0 {
        return Err(invalid("c51 batch_size, target_freq, train_freq and buffer_size must be >= 1"));
    }
    if cfg.n_atoms < 2 || !(cfg.v_max > cfg.v_min) {
        return Err(invalid("c51 needs n_atoms >= 2 and v_max > v_min"));
    }
    if !(cfg.exploration_fraction > 0.0 && cfg.exploration_fraction <= 1.0) {
        return Err(invalid("c51.exploration_fraction must lie in (0, 1]"));
    }
    Ok(cfg)
}

fn resolve_supervised(r: &RawSupervised) -> Result<SupervisedConfig> {
    let cfg = SupervisedConfig {
        lr: positive("supervised.lr", r.lr.unwrap_or(1e-3))?,
        batch_size: r.batch_size.unwrap_or(64),
        input_dim: r.input_dim.unwrap_or(16),
        teacher_hidden: r.teacher_hidden.unwrap_or(32),
        output_dim: r.output_dim.unwrap_or(4),
        teacher_seed: r.teacher_seed.unwrap_or(0),
        eval_size: r.eval_size.unwrap_or(256),
        adapt_window: r.adapt_window.unwrap_or(500),
    };
    if [cfg.batch_size, cfg.input_dim, cfg.teacher_hidden, cfg.output_dim, cfg.eval_size].contains(&0) {
        return Err(invalid("supervised sizes must be >= 1"));
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// The task schedule this config describes.
    pub fn schedule(&self) -> Result<ScenarioSchedule> {
        let s = &self.scenario;
        let base = TaskSpec {
            family: s.env,
            level_seed: s.level_seed,
            variant: s.variants.first().cloned().unwrap_or_default(),
            horizon: s.horizon,
        };
        match s.mode {
            ScenarioMode::Standard => Ok(ScenarioSchedule::standard(base)),
            ScenarioMode::LevelShift => ScenarioSchedule::level_shift(base, s.n_tasks, s.segment_length, s.level_offset),
            ScenarioMode::TaskChain => ScenarioSchedule::task_chain(base, &s.variants, s.n_tasks, s.segment_length),
        }
    }

    /// The resolved config in file form, every default made explicit.
    /// Resolving the result again gives back `self`.
    pub fn to_raw(&self) -> RawConfig {
        let s = &self.scenario;
        let standard = s.mode == ScenarioMode::Standard;
        RawConfig {
            name: Some(self.name.clone()),
            seed: Some(self.seed),
            algo: self.algo,
            total_steps: Some(self.total_steps),
            scenario: RawScenario {
                mode: Some(s.mode),
                env: Some(s.env),
                segment_length: (!standard).then_some(s.segment_length),
                n_tasks: (!standard).then_some(s.n_tasks),
                level_seed: Some(s.level_seed),
                level_offset: Some(s.level_offset),
                variants: (s.env == Family::Pointmass).then(|| s.variants.clone()),
                horizon: Some(s.horizon),
                grid_size: Some(s.grid_size),
                frame_stack: Some(s.frame_stack),
                reward_norm: Some(s.reward_norm),
            },
            network: RawNetwork {
                hidden: Some(self.network.hidden.clone()),
                activation: Some(self.network.activation),
            },
            ppo: self.ppo.as_ref().map_or_else(RawPpo::default, |p| RawPpo {
                lr: Some(p.lr),
                gamma: Some(p.gamma),
                gae_lambda: Some(p.gae_lambda),
                clip_eps: Some(p.clip_eps),
                vf_coef: Some(p.vf_coef),
                ent_coef: Some(p.ent_coef),
                value_clip: Some(p.value_clip.unwrap_or(0.0)),
                max_grad_norm: Some(p.max_grad_norm),
                minibatches: Some(p.minibatches),
                epochs: Some(p.epochs),
                rollout_len: Some(p.rollout_len),
                init_std: Some(p.init_std),
            }),
            c51: self.c51.as_ref().map_or_else(RawC51::default, |c| RawC51 {
                lr: Some(c.lr),
                gamma: Some(c.gamma),
                batch_size: Some(c.batch_size),
                target_freq: Some(c.target_freq),
                learning_starts: Some(c.learning_starts),
                train_freq: Some(c.train_freq),
                n_atoms: Some(c.n_atoms),
                v_min: Some(c.v_min),
                v_max: Some(c.v_max),
                buffer_size: Some(c.buffer_size),
                eps_start: Some(c.eps_start),
                eps_end: Some(c.eps_end),
                exploration_fraction: Some(c.exploration_fraction),
                online_selection: Some(c.online_selection),
            }),
            supervised: self.supervised.as_ref().map_or_else(RawSupervised::default, |c| RawSupervised {
                lr: Some(c.lr),
                batch_size: Some(c.batch_size),
                input_dim: Some(c.input_dim),
                teacher_hidden: Some(c.teacher_hidden),
                output_dim: Some(c.output_dim),
                teacher_seed: Some(c.teacher_seed),
                eval_size: Some(c.eval_size),
                adapt_window: Some(c.adapt_window),
            }),
            mitigations: resolved_entries(&self.plan),
            logging: RawLogging {
                dir: Some(self.logging.dir.clone()),
                metric_interval: Some(self.logging.metric_interval),
                probe_batch: Some(self.logging.probe_batch),
                tau: Some(self.logging.tau),
            },
            checkpoint: RawCheckpoint { interval: Some(self.checkpoint_interval) },
        }
    }

    /// The resolved config as TOML; this is the run's config snapshot.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_raw()).map_err(|e| invalid(format!("cannot encode resolved config: {e}")))
    }
}

/// Plan entries with every default filled in, so a snapshot re-parses to
/// an equal config.
fn resolved_entries(plan: &MitigationPlan) -> Vec<PlanEntry> {
    plan.entries
        .iter()
        .map(|e| PlanEntry { method: e.method, params: e.params.clone(), trigger: Some(e.trigger) })
        .collect()
}
