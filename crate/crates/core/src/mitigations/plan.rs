use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::registry::{Category, Method, ParamRange, ParamValue};
use super::regularize::RegKind;
use super::reset::ResetScope;
use crate::error::{Error, Result};
use crate::net::Activation;

/// Soft shrink-and-perturb default when applied after every update.
pub const SOFT_SNP_BETA: f64 = 1e-4;

/// When a plan entry acts. Step-based triggers count environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trigger {
    EveryKSteps { k: u64 },
    OnTaskSwitch,
    OnceAt { step: u64 },
    PerGradientStep,
    /// Applied once when the learner is built (architecture and optimizer
    /// choices).
    Construction,
}

impl Trigger {
    /// Whether a step-scheduled trigger fires at `step`. Task switches
    /// only count after the first step.
    pub fn fires_at(&self, step: u64, switched: bool) -> bool {
        match *self {
            Trigger::EveryKSteps { k } => step > 0 && step.is_multiple_of(k),
            Trigger::OnTaskSwitch => switched && step > 0,
            Trigger::OnceAt { step: s } => step == s,
            Trigger::PerGradientStep | Trigger::Construction => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Trigger::EveryKSteps { k } => format!("every_k_steps(k={k})"),
            Trigger::OnTaskSwitch => "on_task_switch".into(),
            Trigger::OnceAt { step } => format!("once_at(step={step})"),
            Trigger::PerGradientStep => "per_gradient_step".into(),
            Trigger::Construction => "construction".into(),
        }
    }
}

/// A plan entry as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub method: Method,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Trigger>,
}

impl PlanEntry {
    pub fn new(method: Method) -> Self {
        PlanEntry { method, params: BTreeMap::new(), trigger: None }
    }

    pub fn with_trigger(mut self, trigger: Trigger) -> Self {
        self.trigger = Some(trigger);
        self
    }

    pub fn with_param(mut self, name: &str, value: ParamValue) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

/// A validated entry with every parameter filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedEntry {
    pub method: Method,
    pub params: BTreeMap<String, ParamValue>,
    pub trigger: Trigger,
}

impl ResolvedEntry {
    pub fn num(&self, name: &str) -> f64 {
        self.params.get(name).and_then(ParamValue::as_f64).unwrap_or(f64::NAN)
    }

    pub fn text(&self, name: &str) -> &str {
        self.params.get(name).and_then(ParamValue::as_str).unwrap_or("")
    }

    pub fn reset_scope(&self) -> ResetScope {
        if self.text("scope") == "all" {
            ResetScope::All
        } else {
            ResetScope::Final
        }
    }

    /// Short label for logs, e.g. `shrink_perturb@on_task_switch`.
    pub fn label(&self) -> String {
        format!("{}@{}", self.method.name(), self.trigger.label())
    }
}

fn resolve_entry(idx: usize, e: &PlanEntry) -> Result<ResolvedEntry> {
    let info = e.method.info();
    let trigger = e.trigger.unwrap_or(info.default_trigger);
    let at = |msg: String| Error::Config(format!("mitigation[{idx}] ({}): {msg}", info.name));
    if !info.triggers.accepts(&trigger) {
        return Err(at(format!("trigger {} is not allowed for this method", trigger.label())));
    }
    if let Trigger::EveryKSteps { k: 0 } = trigger {
        return Err(at("every_k_steps needs k >= 1".into()));
    }
    if let Some(unknown) = e.params.keys().find(|k| !info.params.iter().any(|p| p.name == k.as_str())) {
        let known: Vec<_> = info.params.iter().map(|p| p.name).collect();
        return Err(at(format!("unknown parameter `{unknown}` (accepted: {known:?})")));
    }
    let mut params = BTreeMap::new();
    for spec in &info.params {
        let mut value = e.params.get(spec.name).cloned().unwrap_or_else(|| spec.default.clone());
        if e.method == Method::ShrinkPerturb
            && trigger == Trigger::PerGradientStep
            && !e.params.contains_key(spec.name)
        {
            value = ParamValue::Number(SOFT_SNP_BETA);
        }
        match (&spec.range, &value) {
            (ParamRange::Real { min, max }, ParamValue::Number(v)) => {
                if !(v >= min && v <= max) {
                    return Err(at(format!("`{}` = {v} outside [{min}, {max}]", spec.name)));
                }
            }
            (ParamRange::Integer { min, max }, ParamValue::Number(v)) => {
                if v.fract() != 0.0 || !(v >= min && v <= max) {
                    return Err(at(format!("`{}` = {v} must be an integer >= {min}", spec.name)));
                }
            }
            (ParamRange::OneOf(words), ParamValue::Text(s)) => {
                if !words.contains(&s.as_str()) {
                    return Err(at(format!("`{}` = {s:?} not one of {words:?}", spec.name)));
                }
            }
            _ => return Err(at(format!("`{}` has the wrong type", spec.name))),
        }
        params.insert(spec.name.to_string(), value);
    }
    Ok(ResolvedEntry { method: e.method, params, trigger })
}

/// Validated, ordered list of method activations.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MitigationPlan {
    pub entries: Vec<ResolvedEntry>,
}

impl MitigationPlan {
    pub fn resolve(entries: &[PlanEntry]) -> Result<Self> {
        let resolved = entries
            .iter()
            .enumerate()
            .map(|(i, e)| resolve_entry(i, e))
            .collect::<Result<Vec<_>>>()?;
        let count = |c: Category| resolved.iter().filter(|e| e.method.category() == c).count();
        if count(Category::Optimizer) > 1 {
            return Err(Error::Config("at most one optimizer method per plan".into()));
        }
        if count(Category::Activation) > 1 {
            return Err(Error::Config("at most one activation method per plan".into()));
        }
        Ok(MitigationPlan { entries: resolved })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn optimizer(&self) -> Option<&ResolvedEntry> {
        self.entries.iter().find(|e| e.method.category() == Category::Optimizer)
    }

    /// Activation requested by an activation method, if any.
    pub fn activation(&self) -> Option<Activation> {
        self.entries.iter().find_map(|e| match e.method {
            Method::Crelu => Some(Activation::Crelu),
            Method::Fourier => Some(Activation::Fourier),
            _ => None,
        })
    }

    /// LayerNorm is needed by both normalization methods.
    pub fn layer_norm(&self) -> bool {
        self.entries.iter().any(|e| matches!(e.method, Method::LayerNorm | Method::Nap))
    }

    /// `(kind, alpha, s)` for every loss-augmentation entry.
    pub fn regularizers(&self) -> Vec<(RegKind, f64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| match e.method {
                Method::L2 => Some((RegKind::L2, e.num("alpha"), 1.0)),
                Method::Regenerative => Some((RegKind::Regenerative, e.num("alpha"), 1.0)),
                Method::Parseval => Some((RegKind::Parseval, e.num("alpha"), e.num("s"))),
                _ => None,
            })
            .collect()
    }

    /// Entries that mutate parameters outside the loss (resets and
    /// projections), with their plan index.
    pub fn interventions(&self) -> impl Iterator<Item = (usize, &ResolvedEntry)> {
        self.entries.iter().enumerate().filter(|(_, e)| {
            e.method.category() == Category::Reset || e.method == Method::Nap
        })
    }
}
