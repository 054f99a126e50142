//! Glue between a learner's gradient step and the mitigation plan: loss
//! regularizers, the optimizer choice, and per-gradient-step
//! interventions.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::mitigations::optim::{Adam, Kron, Trac};
use crate::mitigations::{apply_intervention, reg_loss, Method, MitigationPlan, OptimizerState, RegKind, ResolvedEntry, Trigger};
use crate::net::{Activation, Gradients, MlpShape, NetworkState, mlp_specs};
use crate::numkit::{Matrix, RngStream};

/// Hidden-layer layout shared by the learners' networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Torso {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub layer_norm: bool,
}

impl Torso {
    pub fn new(hidden: Vec<usize>) -> Self {
        Torso { hidden, activation: Activation::Relu, layer_norm: false }
    }

    /// Applies architecture choices made by the plan (activation swap,
    /// layer normalization).
    pub fn with_plan(mut self, plan: &MitigationPlan) -> Self {
        if let Some(a) = plan.activation() {
            self.activation = a;
        }
        self.layer_norm |= plan.layer_norm();
        self
    }

    pub fn build(&self, input: usize, output: usize, head_gain: f64, rng: &mut RngStream) -> Result<NetworkState> {
        let specs = mlp_specs(&MlpShape {
            input,
            hidden: &self.hidden,
            output,
            activation: self.activation,
            layer_norm: self.layer_norm,
            hidden_gain: std::f64::consts::SQRT_2,
            head_gain,
        });
        NetworkState::new(specs, rng)
    }
}

/// Optimizer requested by the plan, Adam otherwise.
pub fn build_optimizer(plan: &MitigationPlan, net: &NetworkState, lr: f64) -> OptimizerState {
    match plan.optimizer().map(|e| (e.method, e)) {
        Some((Method::Trac, _)) => OptimizerState::Trac(Trac::new(net, lr)),
        Some((Method::Kron, e)) => {
            let mut k = Kron::new(lr);
            k.damping = e.num("damping");
            k.ema = e.num("ema");
            k.inv_every = e.num("inv_every") as u64;
            OptimizerState::Kron(k)
        }
        _ => OptimizerState::Adam(Adam::new(lr)),
    }
}

pub struct Hooks {
    regs: Vec<(RegKind, f64, f64)>,
    per_step: Vec<(usize, ResolvedEntry)>,
    rng: RngStream,
    /// Firing count per plan index.
    pub fired: BTreeMap<usize, u64>,
    /// Probe batch for ReDo when it runs after every update.
    pub probe: Option<Matrix>,
}

impl Hooks {
    pub fn from_plan(plan: &MitigationPlan, rng: RngStream) -> Self {
        let per_step = plan
            .interventions()
            .filter(|(_, e)| e.trigger == Trigger::PerGradientStep)
            .map(|(i, e)| (i, e.clone()))
            .collect();
        Hooks { regs: plan.regularizers(), per_step, rng, fired: BTreeMap::new(), probe: None }
    }

    pub fn none() -> Self {
        Hooks::from_plan(&MitigationPlan::default(), RngStream::new(0, 0))
    }

    /// Adds every regularizer's gradient to `grads`; returns the summed
    /// penalty.
    pub fn regularize(&self, net: &NetworkState, grads: &mut Gradients) -> Result<f64> {
        let mut total = 0.0;
        for &(kind, alpha, s) in &self.regs {
            let (v, g) = reg_loss(kind, net, alpha, s)?;
            grads.add_assign(&g);
            total += v;
        }
        Ok(total)
    }

    /// Runs the per-gradient-step interventions on every network of the
    /// learner. Counted once per call.
    pub fn after_step(&mut self, nets: &mut [&mut NetworkState]) -> Result<()> {
        for (idx, entry) in &self.per_step {
            for net in nets.iter_mut() {
                apply_intervention(entry, net, self.probe.as_ref(), &mut self.rng)?;
            }
            *self.fired.entry(*idx).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn rng(&mut self) -> &mut RngStream {
        &mut self.rng
    }
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Gradients], extra: &mut [f64], max_norm: f64) -> f64 {
    let sq: f64 = grads.iter().map(|g| g.sum_squares()).sum::<f64>() + extra.iter().map(|v| v * v).sum::<f64>();
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            g.scale(s);
        }
        extra.iter_mut().for_each(|v| *v *= s);
    }
    norm
}
