//! Catalog of the implemented mitigation methods.

use serde::{Deserialize, Serialize};

use super::plan::Trigger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Reset,
    Normalization,
    Regularization,
    Activation,
    Optimizer,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Reset,
        Category::Normalization,
        Category::Regularization,
        Category::Activation,
        Category::Optimizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Reset => "reset",
            Category::Normalization => "normalization",
            Category::Regularization => "regularization",
            Category::Activation => "activation",
            Category::Optimizer => "optimizer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ShrinkPerturb,
    PlasticityInjection,
    Redo,
    ResetLayers,
    LayerNorm,
    Nap,
    L2,
    Regenerative,
    Parseval,
    Crelu,
    Fourier,
    Trac,
    Kron,
}

/// Default value of a method parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Text(s) => Some(s),
            ParamValue::Number(_) => None,
        }
    }
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: ParamValue,
    /// Inclusive numeric range, or the allowed words for text params.
    pub range: ParamRange,
    pub doc: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRange {
    Real { min: f64, max: f64 },
    Integer { min: f64, max: f64 },
    OneOf(Vec<&'static str>),
}

/// Which trigger kinds a method accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerClass {
    /// every_k_steps, on_task_switch, once_at, per_gradient_step
    Intervention,
    /// every_k_steps, on_task_switch, once_at
    Scheduled,
    /// per_gradient_step only (loss terms)
    Loss,
    /// construction only (architecture and optimizer choices)
    Structural,
}

impl TriggerClass {
    pub fn accepts(self, t: &Trigger) -> bool {
        match self {
            TriggerClass::Intervention => !matches!(t, Trigger::Construction),
            TriggerClass::Scheduled => {
                !matches!(t, Trigger::Construction | Trigger::PerGradientStep)
            }
            TriggerClass::Loss => matches!(t, Trigger::PerGradientStep),
            TriggerClass::Structural => matches!(t, Trigger::Construction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodInfo {
    pub method: Method,
    pub name: &'static str,
    pub category: Category,
    pub params: Vec<ParamSpec>,
    pub default_trigger: Trigger,
    pub triggers: TriggerClass,
    pub citation: &'static str,
    pub summary: &'static str,
}

fn real(name: &'static str, default: f64, min: f64, max: f64, doc: &'static str) -> ParamSpec {
    ParamSpec { name, default: ParamValue::Number(default), range: ParamRange::Real { min, max }, doc }
}

fn int(name: &'static str, default: f64, min: f64, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default: ParamValue::Number(default),
        range: ParamRange::Integer { min, max: f64::MAX },
        doc,
    }
}

impl Method {
    pub const ALL: [Method; 13] = [
        Method::ShrinkPerturb,
        Method::PlasticityInjection,
        Method::Redo,
        Method::ResetLayers,
        Method::LayerNorm,
        Method::Nap,
        Method::L2,
        Method::Regenerative,
        Method::Parseval,
        Method::Crelu,
        Method::Fourier,
        Method::Trac,
        Method::Kron,
    ];

    pub fn from_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::ShrinkPerturb => "shrink_perturb",
            Method::PlasticityInjection => "plasticity_injection",
            Method::Redo => "redo",
            Method::ResetLayers => "reset_layers",
            Method::LayerNorm => "layer_norm",
            Method::Nap => "nap",
            Method::L2 => "l2",
            Method::Regenerative => "regenerative",
            Method::Parseval => "parseval",
            Method::Crelu => "crelu",
            Method::Fourier => "fourier",
            Method::Trac => "trac",
            Method::Kron => "kron",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Method::ShrinkPerturb | Method::PlasticityInjection | Method::Redo | Method::ResetLayers => {
                Category::Reset
            }
            Method::LayerNorm | Method::Nap => Category::Normalization,
            Method::L2 | Method::Regenerative | Method::Parseval => Category::Regularization,
            Method::Crelu | Method::Fourier => Category::Activation,
            Method::Trac | Method::Kron => Category::Optimizer,
        }
    }

    pub fn info(self) -> MethodInfo {
        let (params, default_trigger, triggers, citation, summary) = match self {
            Method::ShrinkPerturb => (
                vec![real(
                    "beta",
                    0.2,
                    0.0,
                    1.0,
                    "interpolation weight toward a fresh init draw (1e-4 by default when per_gradient_step)",
                )],
                Trigger::OnTaskSwitch,
                TriggerClass::Intervention,
                "Ash & Adams 2020, On Warm-Starting Neural Network Training",
                "shrink parameters toward a fresh initialization draw",
            ),
            Method::PlasticityInjection => (
                vec![],
                Trigger::OnTaskSwitch,
                TriggerClass::Scheduled,
                "Nikishin et al. 2023, Deep Reinforcement Learning with Plasticity Injection",
                "freeze the head, add a trainable head minus its frozen copy",
            ),
            Method::Redo => (
                vec![real("tau", 0.025, 0.0, f64::MAX, "dormancy threshold")],
                Trigger::EveryKSteps { k: 1000 },
                TriggerClass::Intervention,
                "Sokar et al. 2023, The Dormant Neuron Phenomenon in Deep Reinforcement Learning",
                "reinitialize dormant neurons, zero their outgoing weights",
            ),
            Method::ResetLayers => (
                vec![ParamSpec {
                    name: "scope",
                    default: ParamValue::Text("final".into()),
                    range: ParamRange::OneOf(vec!["final", "all"]),
                    doc: "which layers to redraw",
                }],
                Trigger::OnTaskSwitch,
                TriggerClass::Scheduled,
                "Nikishin et al. 2022, The Primacy Bias in Deep Reinforcement Learning",
                "redraw the final layer or all layers",
            ),
            Method::LayerNorm => (
                vec![],
                Trigger::Construction,
                TriggerClass::Structural,
                "Ba et al. 2016, Layer Normalization",
                "layer normalization before every hidden activation",
            ),
            Method::Nap => (
                vec![],
                Trigger::PerGradientStep,
                TriggerClass::Intervention,
                "Lyle et al. 2024, Normalization and Effective Learning Rates in Reinforcement Learning",
                "layer normalization plus projection of weight norms to their initial values",
            ),
            Method::L2 => (
                vec![real("alpha", 1e-4, 0.0, f64::MAX, "loss coefficient")],
                Trigger::PerGradientStep,
                TriggerClass::Loss,
                "Lyle et al. 2023, Understanding Plasticity in Neural Networks",
                "L2 penalty on weights and biases",
            ),
            Method::Regenerative => (
                vec![real("alpha", 1e-4, 0.0, f64::MAX, "loss coefficient")],
                Trigger::PerGradientStep,
                TriggerClass::Loss,
                "Kumar et al. 2023, Maintaining Plasticity in Continual Learning via Regenerative Regularization",
                "L2 penalty on the distance to the initial parameters",
            ),
            Method::Parseval => (
                vec![
                    real("alpha", 1e-3, 0.0, f64::MAX, "loss coefficient"),
                    real("s", 1.0, f64::MIN_POSITIVE, f64::MAX, "target scale of W Wᵀ"),
                ],
                Trigger::PerGradientStep,
                TriggerClass::Loss,
                "Chung et al. 2024, Parseval Regularization for Continual Reinforcement Learning",
                "penalty driving hidden weight matrices toward scaled orthogonality",
            ),
            Method::Crelu => (
                vec![],
                Trigger::Construction,
                TriggerClass::Structural,
                "Abbas et al. 2023, Loss of Plasticity in Continual Deep Reinforcement Learning",
                "concatenated ReLU(x), ReLU(-x) activations",
            ),
            Method::Fourier => (
                vec![],
                Trigger::Construction,
                TriggerClass::Structural,
                "Lewandowski et al. 2025, Plastic Learning with Deep Fourier Features",
                "concatenated sin(x), cos(x) activations",
            ),
            Method::Trac => (
                vec![],
                Trigger::Construction,
                TriggerClass::Structural,
                "Muppidi et al. 2024, Fast TRAC: A Parameter-Free Optimizer for Lifelong Reinforcement Learning",
                "erfi-tuned interpolation between a reference point and Adam iterates",
            ),
            Method::Kron => (
                vec![
                    real("damping", KRON_DAMPING_DEFAULT, 0.0, f64::MAX, "Tikhonov damping added to both factors"),
                    real("ema", 0.95, 0.0, 1.0, "factor moving-average decay"),
                    int("inv_every", 10.0, 1.0, "steps between factor inverse refreshes"),
                ],
                Trigger::Construction,
                TriggerClass::Structural,
                "Castanyer et al. 2025, Stable Gradients for Stable Learning at Scale in Deep Reinforcement Learning",
                "Kronecker-factored curvature preconditioning",
            ),
        };
        MethodInfo {
            method: self,
            name: self.name(),
            category: self.category(),
            params,
            default_trigger,
            triggers,
            citation,
            summary,
        }
    }
}

const KRON_DAMPING_DEFAULT: f64 = super::optim::KRON_DAMPING;

/// Every registered method, grouped by category in catalog order.
pub fn registry() -> Vec<MethodInfo> {
    Method::ALL.iter().map(|m| m.info()).collect()
}
