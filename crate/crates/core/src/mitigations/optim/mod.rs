//! Optimizers: Adam (the default), the TRAC wrapper around Adam, and
//! Kronecker-factored preconditioning.

mod adam;
mod kron;
mod trac;

pub use adam::{Adam, SliceAdam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use kron::{precondition, spd_inverse, Kron, KRON_DAMPING, KRON_EMA, KRON_INV_EVERY};
pub use trac::{trac_combine, Trac, TRAC_BETAS, TRAC_EPS};

use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Gradients, NetworkState};

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Adam(Adam),
    Trac(Trac),
    Kron(Kron),
}

impl OptimizerState {
    pub fn kind(&self) -> &'static str {
        match self {
            OptimizerState::Adam(_) => "adam",
            OptimizerState::Trac(_) => "trac",
            OptimizerState::Kron(_) => "kron",
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerState::Adam(a) => a.lr,
            OptimizerState::Trac(t) => t.base.lr,
            OptimizerState::Kron(k) => k.lr,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            OptimizerState::Adam(a) => a.lr = lr,
            OptimizerState::Trac(t) => t.base.lr = lr,
            OptimizerState::Kron(k) => k.lr = lr,
        }
    }

    /// Drops all accumulated optimizer state (moments, tuners, factors).
    pub fn reset(&mut self, net: &NetworkState) {
        match self {
            OptimizerState::Adam(a) => a.reset(),
            OptimizerState::Trac(t) => *t = Trac::new(net, t.base.lr),
            OptimizerState::Kron(k) => {
                let mut fresh = Kron::new(k.lr);
                fresh.damping = k.damping;
                fresh.ema = k.ema;
                fresh.inv_every = k.inv_every;
                *k = fresh;
            }
        }
    }

    /// Applies one update. Kron needs the forward trace the gradients
    /// were computed from.
    pub fn step(&mut self, net: &mut NetworkState, trace: Option<&ForwardTrace>, grads: &Gradients) -> Result<()> {
        match self {
            OptimizerState::Adam(a) => a.step(net, grads),
            OptimizerState::Trac(t) => t.step(net, grads),
            OptimizerState::Kron(k) => {
                let trace = trace.ok_or_else(|| Error::invalid("kron step needs the forward trace"))?;
                k.step(net, trace, grads)
            }
        }
    }
}
