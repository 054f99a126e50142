//! Mitigation methods: resets, normalization maintenance, loss
//! regularizers, activation choices and optimizers, plus the registry and
//! the plan that schedules them.

mod normalize;
pub mod optim;
mod plan;
mod registry;
mod regularize;
mod reset;

pub use normalize::nap_project;
pub use optim::OptimizerState;
pub use plan::{MitigationPlan, PlanEntry, ResolvedEntry, Trigger, SOFT_SNP_BETA};
pub use registry::{registry, Category, Method, MethodInfo, ParamRange, ParamSpec, ParamValue, TriggerClass};
pub use regularize::{parseval_term, reg_loss, RegKind};
pub use reset::{
    fresh_draw, inject_plasticity, redo_reset, reset_layers, shrink_perturb, shrink_toward, ResetScope,
};

use crate::error::{Error, Result};
use crate::net::NetworkState;
use crate::numkit::{Matrix, RngStream};

/// What an applied intervention did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    /// Neurons reset (ReDo only).
    pub count: usize,
}

/// Applies a reset or projection entry to `net`. `probe` is needed by
/// ReDo.
pub fn apply_intervention(
    entry: &ResolvedEntry,
    net: &mut NetworkState,
    probe: Option<&Matrix>,
    rng: &mut RngStream,
) -> Result<Applied> {
    let mut count = 0;
    match entry.method {
        Method::ShrinkPerturb => shrink_perturb(net, entry.num("beta"), rng)?,
        Method::PlasticityInjection => inject_plasticity(net, rng),
        Method::Redo => {
            let probe = probe.ok_or_else(|| Error::invalid("redo needs a probe batch"))?;
            count = redo_reset(net, probe, entry.num("tau"), rng)?;
        }
        Method::ResetLayers => reset_layers(net, entry.reset_scope(), rng),
        Method::Nap => nap_project(net)?,
        other => {
            return Err(Error::invalid(format!("{} is not an intervention", other.name())));
        }
    }
    Ok(Applied { count })
}
