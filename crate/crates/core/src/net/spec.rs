use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    /// `[relu(x), relu(-x)]`, doubles the width.
    Crelu,
    /// `[sin(x), cos(x)]`, doubles the width.
    Fourier,
    Linear,
}

impl Activation {
    /// Ratio of post-activation width to pre-activation width.
    pub fn width_factor(self) -> usize {
        match self {
            Activation::Crelu | Activation::Fourier => 2,
            _ => 1,
        }
    }

    /// Applies the activation to one sample. `out.len() == pre.len() * width_factor`.
    pub fn apply(self, pre: &[f64], out: &mut [f64]) {
        let n = pre.len();
        match self {
            Activation::Relu => {
                for (o, &z) in out.iter_mut().zip(pre) {
                    *o = z.max(0.0);
                }
            }
            Activation::Tanh => {
                for (o, &z) in out.iter_mut().zip(pre) {
                    *o = z.tanh();
                }
            }
            Activation::Linear => out.copy_from_slice(pre),
            Activation::Crelu => {
                let (pos, neg) = out.split_at_mut(n);
                for i in 0..n {
                    pos[i] = pre[i].max(0.0);
                    neg[i] = (-pre[i]).max(0.0);
                }
            }
            Activation::Fourier => {
                let (s, c) = out.split_at_mut(n);
                for i in 0..n {
                    let (si, ci) = pre[i].sin_cos();
                    s[i] = si;
                    c[i] = ci;
                }
            }
        }
    }

    /// Pulls a post-activation gradient back to the pre-activation.
    pub fn backward(self, pre: &[f64], post: &[f64], grad_post: &[f64], grad_pre: &mut [f64]) {
        let n = pre.len();
        match self {
            Activation::Relu => {
                for i in 0..n {
                    grad_pre[i] = if pre[i] > 0.0 { grad_post[i] } else { 0.0 };
                }
            }
            Activation::Tanh => {
                for i in 0..n {
                    grad_pre[i] = grad_post[i] * (1.0 - post[i] * post[i]);
                }
            }
            Activation::Linear => grad_pre.copy_from_slice(grad_post),
            Activation::Crelu => {
                for i in 0..n {
                    grad_pre[i] = if pre[i] > 0.0 {
                        grad_post[i]
                    } else if pre[i] < 0.0 {
                        -grad_post[n + i]
                    } else {
                        0.0
                    };
                }
            }
            Activation::Fourier => {
                // d sin = cos, d cos = -sin; post holds [sin, cos]
                for i in 0..n {
                    grad_pre[i] = grad_post[i] * post[n + i] - grad_post[n + i] * post[i];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Orthogonal weights scaled by `gain`, zero bias.
    Orthogonal { gain: f64 },
    /// Weights and bias from `U(-1/√fan_in, 1/√fan_in)`.
    UniformFanIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub layer_norm: bool,
    pub init: Init,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, init: Init) -> Self {
        LayerSpec {
            in_dim,
            out_dim,
            activation,
            layer_norm: false,
            init,
        }
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.layer_norm = on;
        self
    }

    /// Width seen by the next layer.
    pub fn output_width(&self) -> usize {
        self.out_dim * self.activation.width_factor()
    }
}

/// Checks that a chain of layer specs is dimension-consistent.
pub fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Spec("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::Spec(format!("layer {i} has a zero dimension")));
        }
        if let Init::Orthogonal { gain } = s.init {
            if !gain.is_finite() {
                return Err(Error::Spec(format!("layer {i} has non-finite gain")));
            }
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        let width = pair[0].output_width();
        if pair[1].in_dim != width {
            return Err(Error::Spec(format!(
                "layer {} expects in_dim {} but layer {i} produces {width}",
                i + 1,
                pair[1].in_dim
            )));
        }
    }
    Ok(())
}

/// Hyper-parameters for a plain MLP torso plus linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpShape<'a> {
    pub input: usize,
    pub hidden: &'a [usize],
    pub output: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    pub hidden_gain: f64,
    pub head_gain: f64,
}

/// Builds a chain: hidden layers with `activation` (optionally normalized),
/// then a linear head. Widths after CReLU/Fourier are doubled automatically.
pub fn mlp_specs(shape: &MlpShape<'_>) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(shape.hidden.len() + 1);
    let mut width = shape.input;
    for &h in shape.hidden {
        let spec = LayerSpec::new(
            width,
            h,
            shape.activation,
            Init::Orthogonal {
                gain: shape.hidden_gain,
            },
        )
        .with_layer_norm(shape.layer_norm);
        width = spec.output_width();
        specs.push(spec);
    }
    specs.push(LayerSpec::new(
        width,
        shape.output,
        Activation::Linear,
        Init::Orthogonal {
            gain: shape.head_gain,
        },
    ));
    specs
}
