//! The training loop: collect experience, update the learner, fire the
//! plan's interventions, log metrics and checkpoint on schedule.
//!
//! Every source of randomness has its own stream derived from the
//! master seed, so enabling a mitigation never changes what the
//! environment or the probe batch sees.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::envs::{mse, Env, FrameStack, ProbeTask, RewardNormalizer, ScenarioSchedule, Transition};
use crate::error::{Error, Result};
use crate::learners::{
    build_optimizer, epsilon_schedule, ActionSpace, C51Agent, C51Stats, Hooks, PpoAgent, PpoStats, Torso,
    TrajectoryBatch,
};
use crate::metrics::{collect_metrics, MetricLine, MetricReport};
use crate::mitigations::{apply_intervention, Category, Method, OptimizerState, Trigger};
use crate::net::{save_checkpoint, Gradients, NetworkState};
use crate::numkit::{Matrix, RngStream};

use super::config::{Algo, ExperimentConfig};
use super::logs::{DivergenceRecord, FiringRecord, RunArtifacts, RunLogs, RunSummary, CHECKPOINT_DIR};
use super::probe::ProbeSpec;

pub const STREAM_ENV: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_MITIGATION: u64 = 3;
// stream 4 belongs to probe batches
pub const STREAM_ACTION: u64 = 5;
/// Minibatch shuffles, replay sampling and supervised data.
pub const STREAM_UPDATE: u64 = 6;
pub const STREAM_EVAL: u64 = 7;

/// Episodes averaged into `final_mean_return`.
pub const RETURN_WINDOW: usize = 20;

/// Where a config's run writes its artifacts.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.logging.dir.join(format!("{}-seed{}", cfg.name, cfg.seed))
}

/// Number of gradient steps the learner takes over `total_steps`.
pub fn expected_gradient_steps(cfg: &ExperimentConfig) -> u64 {
    let total = cfg.total_steps;
    match cfg.algo {
        Algo::Ppo => {
            let p = cfg.ppo.as_ref().expect("resolved ppo block");
            (total / p.rollout_len as u64) * (p.epochs * p.minibatches) as u64
        }
        Algo::C51 => {
            let c = cfg.c51.as_ref().expect("resolved c51 block");
            let f = c.train_freq;
            let first = (c.learning_starts / f + 1) * f;
            let mut n = 0;
            let mut s = first;
            while s <= total {
                if (s.min(c.buffer_size as u64)) >= c.batch_size as u64 {
                    n += 1;
                }
                s += f;
            }
            n
        }
        Algo::Supervised => total,
    }
}

/// How often `trigger` fires in a run.
pub fn expected_firings(trigger: &Trigger, schedule: &ScenarioSchedule, total: u64, gradient_steps: u64) -> u64 {
    match *trigger {
        Trigger::EveryKSteps { k } => total / k,
        Trigger::OnTaskSwitch => schedule.switches_within(total),
        Trigger::OnceAt { step } => u64::from((1..=total).contains(&step)),
        Trigger::PerGradientStep => gradient_steps,
        Trigger::Construction => 1,
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    schedule: ScenarioSchedule,
    logs: RunLogs,
    hooks: Hooks,
    step: u64,
    episodes: u64,
    returns: Vec<f64>,
    window_returns: Vec<f64>,
    gradient_steps: u64,
    fired: BTreeMap<usize, u64>,
    checkpoints: Vec<PathBuf>,
}

impl Ctx<'_> {
    fn episode(&mut self, ret: f64, length: u64) -> Result<()> {
        self.episodes += 1;
        self.returns.push(ret);
        self.window_returns.push(ret);
        self.logs.episode(self.step, self.episodes, ret, length)
    }
}

/// One learner plugged into the shared loop.
trait Algorithm {
    /// Networks with their log prefix and latest gradients.
    fn nets(&self) -> Vec<(&'static str, &NetworkState, Option<&Gradients>)>;
    fn nets_mut(&mut self) -> Vec<&mut NetworkState>;
    fn reset_optimizers(&mut self);
    /// One environment (or data) step, including any learner update.
    fn advance(&mut self, ctx: &mut Ctx) -> Result<()>;
    /// Called when segment `segment` begins (after its first step).
    fn switch_task(&mut self, ctx: &mut Ctx, segment: usize) -> Result<()>;
    fn probe_spec(&self, ctx: &Ctx, segment: usize) -> ProbeSpec;
    /// Learner statistics since the last report.
    fn stats_lines(&mut self, step: u64) -> Vec<MetricLine>;
}

fn line(step: u64, scope: &str, metric: &str, value: f64) -> MetricLine {
    MetricLine { step, scope: scope.into(), metric: metric.into(), value }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::Divergence { .. })
}

/// Runs `cfg` to completion, writing everything under [`run_dir`].
///
/// A non-finite loss, gradient or reward aborts the run with
/// [`Error::Divergence`]; the summary then records the failing step and
/// the last metric report that was written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let dir = run_dir(cfg);
    let logs = RunLogs::open(&dir, &cfg.to_toml()?)?;
    let mut ctx = Ctx {
        cfg,
        schedule: cfg.schedule()?,
        logs,
        hooks: Hooks::from_plan(&cfg.plan, RngStream::new(cfg.seed, STREAM_MITIGATION)),
        step: 0,
        episodes: 0,
        returns: Vec::new(),
        window_returns: Vec::new(),
        gradient_steps: 0,
        fired: BTreeMap::new(),
        checkpoints: Vec::new(),
    };
    let outcome = match cfg.algo {
        Algo::Ppo => PpoRun::new(&mut ctx).and_then(|mut a| drive(&mut a, &mut ctx)),
        Algo::C51 => C51Run::new(&mut ctx).and_then(|mut a| drive(&mut a, &mut ctx)),
        Algo::Supervised => SupervisedRun::new(&mut ctx).and_then(|mut a| drive(&mut a, &mut ctx)),
    };
    let mut summary = summarize(&ctx);
    match outcome {
        Ok(()) => {
            ctx.logs.write_summary(&summary)?;
            Ok(RunArtifacts {
                metrics: dir.join(super::logs::METRICS_FILE),
                episodes: dir.join(super::logs::EPISODES_FILE),
                config: dir.join(super::logs::CONFIG_FILE),
                dir,
                checkpoints: ctx.checkpoints,
                summary,
            })
        }
        Err(e) if is_divergence(&e) => {
            let reason = e.to_string();
            summary.diverged = Some(DivergenceRecord {
                step: ctx.step,
                reason: reason.clone(),
                last_metric_step: ctx.logs.last_metric_step,
            });
            ctx.logs.write_summary(&summary)?;
            Err(Error::Divergence { step: ctx.step, reason })
        }
        Err(e) => {
            ctx.logs.flush()?;
            Err(e)
        }
    }
}

fn summarize(ctx: &Ctx) -> RunSummary {
    let cfg = ctx.cfg;
    let grad_steps = expected_gradient_steps(cfg);
    let firings = cfg
        .plan
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let count = match e.trigger {
                Trigger::Construction => 1,
                Trigger::PerGradientStep if e.method.category() == Category::Regularization => ctx.gradient_steps,
                _ => ctx.fired.get(&i).copied().unwrap_or(0) + ctx.hooks.fired.get(&i).copied().unwrap_or(0),
            };
            FiringRecord {
                index: i,
                method: e.method.name().into(),
                trigger: e.trigger.label(),
                count,
                expected: expected_firings(&e.trigger, &ctx.schedule, cfg.total_steps, grad_steps),
            }
        })
        .collect();
    let tail = &ctx.returns[ctx.returns.len().saturating_sub(RETURN_WINDOW)..];
    RunSummary {
        name: cfg.name.clone(),
        algo: format!("{:?}", cfg.algo).to_lowercase(),
        seed: cfg.seed,
        steps: ctx.step,
        episodes: ctx.episodes,
        gradient_steps: ctx.gradient_steps,
        final_mean_return: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
        firings,
        diverged: None,
    }
}

fn drive<A: Algorithm>(alg: &mut A, ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let total = cfg.total_steps;
    let mut probe_spec = alg.probe_spec(ctx, 0);
    let mut probe = probe_spec.build()?;
    ctx.hooks.probe = Some(probe.clone());
    report(alg, ctx, &probe, &probe_spec)?;
    for s in 1..=total {
        ctx.step = s;
        alg.advance(ctx)?;
        let switched = s < total && ctx.schedule.shift(s)?.1;
        if switched {
            let segment = ctx.schedule.segment_index(s);
            alg.switch_task(ctx, segment)?;
            probe_spec = alg.probe_spec(ctx, segment);
            probe = probe_spec.build()?;
            ctx.hooks.probe = Some(probe.clone());
        }
        let mut reset_optimizers = false;
        for (idx, entry) in cfg.plan.interventions() {
            if !entry.trigger.fires_at(s, switched) {
                continue;
            }
            for net in alg.nets_mut() {
                apply_intervention(entry, net, Some(&probe), ctx.hooks.rng())?;
            }
            *ctx.fired.entry(idx).or_insert(0) += 1;
            reset_optimizers |= entry.method == Method::ResetLayers;
        }
        if reset_optimizers {
            alg.reset_optimizers();
        }
        if s % cfg.logging.metric_interval == 0 || s == total {
            report(alg, ctx, &probe, &probe_spec)?;
        }
    }
    Ok(())
}

/// Logs the metric suite for every network, then checkpoints if due.
fn report<A: Algorithm>(alg: &mut A, ctx: &mut Ctx, probe: &Matrix, spec: &ProbeSpec) -> Result<()> {
    let cfg = ctx.cfg;
    let s = ctx.step;
    let mut lines = Vec::new();
    let mut per_net = Vec::new();
    for (role, net, grads) in alg.nets() {
        let reports = collect_metrics(net, probe, grads, None, cfg.logging.tau, s)?;
        lines.extend(reports.iter().flat_map(|r| r.lines(role)));
        per_net.push((role, reports));
    }
    lines.extend(alg.stats_lines(s));
    if !ctx.window_returns.is_empty() {
        let w = &ctx.window_returns;
        lines.push(line(s, "episodes", "mean_return", w.iter().sum::<f64>() / w.len() as f64));
        lines.push(line(s, "episodes", "count", w.len() as f64));
        ctx.window_returns.clear();
    }
    ctx.logs.metric_lines(&lines)?;
    ctx.logs.last_metric_step = Some(s);
    ctx.logs.flush()?;

    let every = cfg.checkpoint_interval;
    if every > 0 && s.is_multiple_of(every) {
        let dir = ctx.logs.dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for ((role, net, _), (_, reports)) in alg.nets().into_iter().zip(&per_net) {
            let path = dir.join(format!("step{s:010}_{role}.json"));
            let meta = checkpoint_meta(cfg, role, s, spec, reports);
            save_checkpoint(net, &path, meta)?;
            ctx.checkpoints.push(path);
        }
    }
    Ok(())
}

fn checkpoint_meta(cfg: &ExperimentConfig, role: &str, step: u64, spec: &ProbeSpec, reports: &[MetricReport]) -> serde_json::Value {
    // gradient norms depend on the training minibatch, so they travel
    // with the checkpoint instead of being recomputed
    let grad_norms: BTreeMap<&str, f64> =
        reports.iter().filter_map(|r| r.grad_norm.map(|g| (r.scope.as_str(), g))).collect();
    serde_json::json!({
        "name": cfg.name,
        "seed": cfg.seed,
        "algo": cfg.algo,
        "role": role,
        "step": step,
        "tau": cfg.logging.tau,
        "probe": spec,
        "grad_norms": grad_norms,
    })
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what: what.into(), layer: 0 })
    }
}

fn rollout_probe(ctx: &Ctx, segment: usize) -> ProbeSpec {
    let s = &ctx.cfg.scenario;
    ProbeSpec::Rollout {
        seed: ctx.cfg.seed,
        segment,
        task: ctx.schedule.segments[segment].clone(),
        grid_size: s.grid_size,
        frame_stack: s.frame_stack,
        n: ctx.cfg.logging.probe_batch,
    }
}

/// Environment plus observation pipeline shared by the RL learners.
struct EnvLoop {
    env: Env,
    frames: FrameStack,
    obs: Vec<f64>,
    ep_return: f64,
    ep_len: u64,
}

impl EnvLoop {
    fn new(ctx: &Ctx, segment: usize) -> Result<EnvLoop> {
        let env_rng = RngStream::new(ctx.cfg.seed, STREAM_ENV + ((segment as u64) << 32));
        let mut env = Env::make(&ctx.schedule.segments[segment], ctx.cfg.scenario.grid_size, env_rng)?;
        let mut frames = FrameStack::new(ctx.cfg.scenario.frame_stack);
        let obs = frames.reset(&env.reset());
        Ok(EnvLoop { env, frames, obs, ep_return: 0.0, ep_len: 0 })
    }

    fn obs_dim(&self) -> usize {
        self.obs.len()
    }

    /// Steps the env; returns the transition and the next agent input.
    /// Finished episodes are logged and the env reset.
    fn step(&mut self, ctx: &mut Ctx, action: &[f64]) -> Result<(Transition, Vec<f64>)> {
        let tr = self.env.step(action)?;
        check_finite("reward", tr.reward)?;
        self.ep_return += tr.reward;
        self.ep_len += 1;
        let next = self.frames.push(&tr.obs);
        if tr.done() {
            ctx.episode(self.ep_return, self.ep_len)?;
            self.ep_return = 0.0;
            self.ep_len = 0;
            self.obs = self.frames.reset(&self.env.reset());
        } else {
            self.obs = next.clone();
        }
        Ok((tr, next))
    }
}

struct PpoRun {
    agent: PpoAgent,
    envs: EnvLoop,
    batch: TrajectoryBatch,
    norm: Option<RewardNormalizer>,
    action_rng: RngStream,
    update_rng: RngStream,
    last: Option<PpoStats>,
}

impl PpoRun {
    fn new(ctx: &mut Ctx) -> Result<PpoRun> {
        let cfg = ctx.cfg;
        let ppo = cfg.ppo.clone().expect("resolved ppo block");
        let envs = EnvLoop::new(ctx, 0)?;
        let space = envs.env.action_space();
        let torso = Torso::new(cfg.network.hidden.clone());
        let torso = Torso { activation: cfg.network.activation, ..torso };
        let mut init = RngStream::new(cfg.seed, STREAM_INIT);
        let agent = PpoAgent::new(ppo.clone(), space, envs.obs_dim(), &torso, &cfg.plan, &mut init)?;
        Ok(PpoRun {
            batch: TrajectoryBatch::new(envs.obs_dim(), space.stored_dim()),
            norm: cfg.scenario.reward_norm.then(|| RewardNormalizer::new(ppo.gamma)),
            action_rng: RngStream::new(cfg.seed, STREAM_ACTION),
            update_rng: RngStream::new(cfg.seed, STREAM_UPDATE),
            agent,
            envs,
            last: None,
        })
    }
}

/// Squashes a Gaussian sample into the point mass's force box. The
/// learner keeps the unsquashed sample and its plain Gaussian log-prob.
fn env_action(space: ActionSpace, action: &[f64]) -> Vec<f64> {
    match space {
        ActionSpace::Discrete(_) => action.to_vec(),
        ActionSpace::Continuous(_) => action.iter().map(|a| a.tanh()).collect(),
    }
}

impl Algorithm for PpoRun {
    fn nets(&self) -> Vec<(&'static str, &NetworkState, Option<&Gradients>)> {
        vec![
            ("actor", &self.agent.actor, self.agent.last_actor_grads.as_ref()),
            ("critic", &self.agent.critic, self.agent.last_critic_grads.as_ref()),
        ]
    }

    fn nets_mut(&mut self) -> Vec<&mut NetworkState> {
        vec![&mut self.agent.actor, &mut self.agent.critic]
    }

    fn reset_optimizers(&mut self) {
        self.agent.reset_optimizers();
    }

    fn advance(&mut self, ctx: &mut Ctx) -> Result<()> {
        let obs = self.envs.obs.clone();
        let out = self.agent.act(&obs, &mut self.action_rng)?;
        let (tr, _) = self.envs.step(ctx, &env_action(self.agent.space, &out.action))?;
        let done = tr.done();
        let reward = match &mut self.norm {
            Some(n) => n.normalize(tr.reward, done),
            None => tr.reward,
        };
        // a task switch cuts the episode, so the rollout must not
        // bootstrap across it
        let s = ctx.step;
        let cut = s < ctx.cfg.total_steps && ctx.schedule.shift(s)?.1;
        self.batch.push(&obs, &out.action, reward, done || cut, out.log_prob, out.value)?;
        if self.batch.len() == self.agent.cfg.rollout_len {
            let bootstrap = self.agent.value(&self.envs.obs)?;
            let stats = self.agent.update(&self.batch, bootstrap, &mut ctx.hooks, &mut self.update_rng)?;
            for v in [stats.policy_loss, stats.value_loss, stats.entropy, stats.grad_norm] {
                check_finite("ppo loss", v)?;
            }
            ctx.gradient_steps += stats.updates;
            self.batch.clear();
            self.last = Some(stats);
        }
        Ok(())
    }

    fn switch_task(&mut self, ctx: &mut Ctx, segment: usize) -> Result<()> {
        self.envs = EnvLoop::new(ctx, segment)?;
        Ok(())
    }

    fn probe_spec(&self, ctx: &Ctx, segment: usize) -> ProbeSpec {
        rollout_probe(ctx, segment)
    }

    fn stats_lines(&mut self, step: u64) -> Vec<MetricLine> {
        let Some(s) = self.last.take() else { return Vec::new() };
        [
            ("policy_loss", s.policy_loss),
            ("value_loss", s.value_loss),
            ("entropy", s.entropy),
            ("approx_kl", s.approx_kl),
            ("clip_fraction", s.clip_fraction),
            ("reg_loss", s.reg_loss),
            ("grad_norm", s.grad_norm),
        ]
        .into_iter()
        .map(|(m, v)| line(step, "learner", m, v))
        .collect()
    }
}

struct C51Run {
    agent: C51Agent,
    envs: EnvLoop,
    action_rng: RngStream,
    update_rng: RngStream,
    last: Option<C51Stats>,
}

impl C51Run {
    fn new(ctx: &mut Ctx) -> Result<C51Run> {
        let cfg = ctx.cfg;
        let c51 = cfg.c51.clone().expect("resolved c51 block");
        let envs = EnvLoop::new(ctx, 0)?;
        let n_actions = match envs.env.action_space() {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous(_) => return Err(Error::Config("c51 needs a discrete-action env".into())),
        };
        let torso = Torso { activation: cfg.network.activation, ..Torso::new(cfg.network.hidden.clone()) };
        let mut init = RngStream::new(cfg.seed, STREAM_INIT);
        let agent = C51Agent::new(c51, envs.obs_dim(), n_actions, &torso, &cfg.plan, &mut init)?;
        Ok(C51Run {
            agent,
            envs,
            action_rng: RngStream::new(cfg.seed, STREAM_ACTION),
            update_rng: RngStream::new(cfg.seed, STREAM_UPDATE),
            last: None,
        })
    }
}

impl Algorithm for C51Run {
    fn nets(&self) -> Vec<(&'static str, &NetworkState, Option<&Gradients>)> {
        vec![("online", &self.agent.online, self.agent.last_grads.as_ref())]
    }

    fn nets_mut(&mut self) -> Vec<&mut NetworkState> {
        vec![&mut self.agent.online]
    }

    fn reset_optimizers(&mut self) {
        self.agent.opt.reset(&self.agent.online);
    }

    fn advance(&mut self, ctx: &mut Ctx) -> Result<()> {
        let c = &self.agent.cfg;
        let s = ctx.step;
        let eps = epsilon_schedule(s, c.eps_start, c.eps_end, c.exploration_fraction, ctx.cfg.total_steps);
        let obs = self.envs.obs.clone();
        let a = self.agent.act(&obs, eps, &mut self.action_rng)?;
        let (tr, next) = self.envs.step(ctx, &[a as f64])?;
        // truncation is not terminal: the target still bootstraps
        self.agent.buffer.push(&obs, a, tr.reward, &next, tr.terminated)?;
        let c = &self.agent.cfg;
        if s > c.learning_starts {
            if s.is_multiple_of(c.train_freq) {
                if let Some(stats) = self.agent.update(&mut ctx.hooks, &mut self.update_rng)? {
                    check_finite("c51 loss", stats.loss)?;
                    ctx.gradient_steps += 1;
                    self.last = Some(stats);
                }
            }
            if s.is_multiple_of(self.agent.cfg.target_freq) {
                self.agent.sync_target();
            }
        }
        Ok(())
    }

    fn switch_task(&mut self, ctx: &mut Ctx, segment: usize) -> Result<()> {
        self.envs = EnvLoop::new(ctx, segment)?;
        Ok(())
    }

    fn probe_spec(&self, ctx: &Ctx, segment: usize) -> ProbeSpec {
        rollout_probe(ctx, segment)
    }

    fn stats_lines(&mut self, step: u64) -> Vec<MetricLine> {
        let Some(s) = self.last.take() else { return Vec::new() };
        vec![
            line(step, "learner", "loss", s.loss),
            line(step, "learner", "reg_loss", s.reg_loss),
            line(step, "learner", "grad_norm", s.grad_norm),
        ]
    }
}

/// Regression on a permuted teacher; each segment is a new permutation.
struct SupervisedRun {
    task: ProbeTask,
    net: NetworkState,
    opt: OptimizerState,
    last_grads: Option<Gradients>,
    data_rng: RngStream,
    eval_x: Matrix,
    batch_size: usize,
    perm_seed: u64,
    segment: usize,
    segment_start: u64,
    adapt_window: u64,
    loss_start: f64,
    loss_sum: f64,
    loss_count: u64,
    reg_sum: f64,
}

impl SupervisedRun {
    fn new(ctx: &mut Ctx) -> Result<SupervisedRun> {
        let cfg = ctx.cfg;
        let sup = cfg.supervised.clone().expect("resolved supervised block");
        let task = ProbeTask::new(sup.teacher_seed, sup.input_dim, sup.teacher_hidden, sup.output_dim)?;
        let torso = Torso { activation: cfg.network.activation, ..Torso::new(cfg.network.hidden.clone()) }
            .with_plan(&cfg.plan);
        let net = torso.build(sup.input_dim, sup.output_dim, 1.0, &mut RngStream::new(cfg.seed, STREAM_INIT))?;
        let mut eval_rng = RngStream::new(cfg.seed, STREAM_EVAL);
        let eval: Vec<f64> = (0..sup.eval_size * sup.input_dim).map(|_| eval_rng.standard_normal()).collect();
        Ok(SupervisedRun {
            opt: build_optimizer(&cfg.plan, &net, sup.lr),
            task,
            net,
            last_grads: None,
            data_rng: RngStream::new(cfg.seed, STREAM_UPDATE),
            eval_x: Matrix::from_vec(sup.eval_size, sup.input_dim, eval)?,
            batch_size: sup.batch_size,
            perm_seed: ctx.schedule.segments[0].level_seed,
            segment: 0,
            segment_start: 0,
            adapt_window: sup.adapt_window,
            loss_start: f64::NAN,
            loss_sum: 0.0,
            loss_count: 0,
            reg_sum: 0.0,
        })
    }

    /// Loss of the current task on the fixed evaluation inputs.
    fn eval_loss(&self) -> Result<f64> {
        let y = self.task.targets(&self.task.permutation(self.perm_seed), &self.eval_x)?;
        Ok(mse(&self.net.predict(&self.eval_x)?, &y))
    }
}

impl Algorithm for SupervisedRun {
    fn nets(&self) -> Vec<(&'static str, &NetworkState, Option<&Gradients>)> {
        vec![("net", &self.net, self.last_grads.as_ref())]
    }

    fn nets_mut(&mut self) -> Vec<&mut NetworkState> {
        vec![&mut self.net]
    }

    fn reset_optimizers(&mut self) {
        self.opt.reset(&self.net);
    }

    fn advance(&mut self, ctx: &mut Ctx) -> Result<()> {
        if self.loss_start.is_nan() {
            self.loss_start = self.eval_loss()?;
        }
        let (x, y) = self.task.batch(self.perm_seed, self.batch_size, &mut self.data_rng)?;
        let trace = self.net.forward(&x)?;
        let loss = mse(&trace.output, &y);
        check_finite("regression loss", loss)?;
        let scale = 2.0 / (y.rows() * y.cols()) as f64;
        let g = Matrix::from_vec(
            y.rows(),
            y.cols(),
            trace.output.data().iter().zip(y.data()).map(|(p, t)| scale * (p - t)).collect(),
        )?;
        let mut grads = self.net.backward(&trace, &g)?;
        let reg = ctx.hooks.regularize(&self.net, &mut grads)?;
        self.opt.step(&mut self.net, Some(&trace), &grads)?;
        ctx.hooks.after_step(&mut [&mut self.net])?;
        self.last_grads = Some(grads);
        ctx.gradient_steps += 1;
        self.loss_sum += loss;
        self.reg_sum += reg;
        self.loss_count += 1;

        let s = ctx.step;
        if s - self.segment_start == self.adapt_window {
            let after = self.eval_loss()?;
            let scope = format!("task{}", self.segment);
            let speed = if self.loss_start > 0.0 { (self.loss_start - after) / self.loss_start } else { 0.0 };
            ctx.logs.metric_lines(&[
                line(s, &scope, "loss_start", self.loss_start),
                line(s, &scope, "loss_window", after),
                line(s, &scope, "adaptation_speed", speed),
            ])?;
        }
        Ok(())
    }

    fn switch_task(&mut self, ctx: &mut Ctx, segment: usize) -> Result<()> {
        self.segment = segment;
        self.segment_start = ctx.step;
        self.perm_seed = ctx.schedule.segments[segment].level_seed;
        // measured lazily so interventions fired at the switch come first
        self.loss_start = f64::NAN;
        Ok(())
    }

    fn probe_spec(&self, ctx: &Ctx, _segment: usize) -> ProbeSpec {
        let sup = ctx.cfg.supervised.as_ref().expect("resolved supervised block");
        ProbeSpec::Inputs { seed: ctx.cfg.seed, n: ctx.cfg.logging.probe_batch, input_dim: sup.input_dim }
    }

    fn stats_lines(&mut self, step: u64) -> Vec<MetricLine> {
        if self.loss_count == 0 {
            return Vec::new();
        }
        let n = self.loss_count as f64;
        let out = vec![
            line(step, "learner", "loss", self.loss_sum / n),
            line(step, "learner", "reg_loss", self.reg_sum / n),
        ];
        self.loss_sum = 0.0;
        self.reg_sum = 0.0;
        self.loss_count = 0;
        out
    }
}
