use serde::{Deserialize, Serialize};

use super::params::LayerParams;
use super::spec::{validate_chain, LayerSpec};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

/// LayerNorm variance epsilon.
pub const LN_EPS: f64 = 1e-5;

/// Extra output head added by plasticity injection. Its output is added
/// with `sign` to the network output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedHead {
    pub params: LayerParams,
    pub sign: f64,
    pub trainable: bool,
    /// Weight Frobenius norm at creation, used by norm projection.
    pub init_norm: f64,
}

/// A dense feed-forward network together with a frozen copy of its
/// initial parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    specs: Vec<LayerSpec>,
    params: Vec<LayerParams>,
    init_snapshot: Vec<LayerParams>,
    frozen: Vec<bool>,
    heads: Vec<InjectedHead>,
    generation: u64,
}

/// Per-layer record of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Input to the nonlinearity (after normalization when enabled).
    pub preact: Matrix,
    pub postact: Matrix,
    /// Normalized (pre-affine) values and per-sample inverse std.
    pub normed: Option<(Matrix, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Matrix,
    pub layers: Vec<LayerTrace>,
    pub heads: Vec<LayerTrace>,
    pub output: Matrix,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn layer_input(&self, layer: usize) -> &Matrix {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].postact
        }
    }

    /// Post-activations of the layers treated as "hidden" by the metrics:
    /// every layer but the output head (or the single layer of a 1-layer net).
    pub fn hidden_postacts(&self) -> Vec<&Matrix> {
        let n = self.layers.len();
        let take = if n > 1 { n - 1 } else { n };
        self.layers[..take].iter().map(|l| &l.postact).collect()
    }

    /// Input to the output head, the network's representation.
    pub fn representation(&self) -> &Matrix {
        self.layer_input(self.layers.len() - 1)
    }
}

/// Gradients for every unit (base layers, then injected heads). Frozen
/// units carry all-zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub units: Vec<LayerParams>,
    /// Gradient w.r.t. each unit's linear output `x·Wᵀ + b`.
    pub preact_grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(net: &NetworkState) -> Self {
        Gradients {
            units: (0..net.unit_count())
                .map(|u| net.unit_params(u).zeros_like())
                .collect(),
            preact_grads: Vec::new(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.units.iter_mut().zip(&other.units) {
            for (x, y) in a.slices_mut().into_iter().zip(b.slices()) {
                for (xi, yi) in x.iter_mut().zip(y) {
                    *xi += yi;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for u in &mut self.units {
            for sl in u.slices_mut() {
                sl.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.units
            .iter()
            .flat_map(|u| u.slices())
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.units.iter().flat_map(|u| u.flat()).collect()
    }
}

impl NetworkState {
    pub fn new(specs: Vec<LayerSpec>, rng: &mut RngStream) -> Result<Self> {
        validate_chain(&specs)?;
        let params: Vec<LayerParams> = specs.iter().map(|s| LayerParams::draw(s, rng)).collect();
        let n = specs.len();
        Ok(NetworkState {
            init_snapshot: params.clone(),
            params,
            specs,
            frozen: vec![false; n],
            heads: Vec::new(),
            generation: 0,
        })
    }

    /// Reassembles a network from stored parts, checking every shape.
    pub fn from_parts(
        specs: Vec<LayerSpec>,
        params: Vec<LayerParams>,
        init_snapshot: Vec<LayerParams>,
        frozen: Vec<bool>,
        heads: Vec<InjectedHead>,
    ) -> Result<Self> {
        validate_chain(&specs)?;
        if params.len() != specs.len()
            || init_snapshot.len() != specs.len()
            || frozen.len() != specs.len()
        {
            return Err(Error::invalid("parameter count does not match layer specs"));
        }
        for (i, spec) in specs.iter().enumerate() {
            for p in [&params[i], &init_snapshot[i]] {
                check_layer_shape(spec, p, i)?;
            }
        }
        let last = specs.last().expect("validated non-empty");
        for (h, head) in heads.iter().enumerate() {
            check_layer_shape(last, &head.params, specs.len() + h)?;
        }
        Ok(NetworkState {
            specs,
            params,
            init_snapshot,
            frozen,
            heads,
            generation: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    pub fn init_snapshot(&self) -> &[LayerParams] {
        &self.init_snapshot
    }

    pub fn heads(&self) -> &[InjectedHead] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [InjectedHead] {
        &mut self.heads
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].output_width()
    }

    /// Incremented whenever the set of trainable units changes.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Base layers followed by injected heads.
    pub fn unit_count(&self) -> usize {
        self.specs.len() + self.heads.len()
    }

    pub fn unit_spec(&self, unit: usize) -> &LayerSpec {
        &self.specs[unit.min(self.specs.len() - 1)]
    }

    pub fn unit_params(&self, unit: usize) -> &LayerParams {
        if unit < self.params.len() {
            &self.params[unit]
        } else {
            &self.heads[unit - self.params.len()].params
        }
    }

    pub fn unit_params_mut(&mut self, unit: usize) -> &mut LayerParams {
        if unit < self.params.len() {
            &mut self.params[unit]
        } else {
            let n = self.params.len();
            &mut self.heads[unit - n].params
        }
    }

    pub fn unit_trainable(&self, unit: usize) -> bool {
        if unit < self.frozen.len() {
            !self.frozen[unit]
        } else {
            self.heads[unit - self.frozen.len()].trainable
        }
    }

    /// Mutable views of every unit (base layers, then heads).
    pub fn units_mut(&mut self) -> Vec<&mut LayerParams> {
        self.params
            .iter_mut()
            .chain(self.heads.iter_mut().map(|h| &mut h.params))
            .collect()
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        (0..self.unit_count()).map(|u| self.unit_trainable(u)).collect()
    }

    pub fn param_count(&self) -> usize {
        (0..self.unit_count()).map(|u| self.unit_params(u).len()).sum()
    }

    /// Freezes the output layer and every existing head, then appends a
    /// trainable head and its frozen negated twin.
    pub(crate) fn push_injection(&mut self, fresh: LayerParams) {
        let last = self.frozen.len() - 1;
        self.frozen[last] = true;
        for h in &mut self.heads {
            h.trainable = false;
        }
        let init_norm = fresh.weight.frobenius_norm();
        self.heads.push(InjectedHead {
            params: fresh.clone(),
            sign: 1.0,
            trainable: true,
            init_norm,
        });
        self.heads.push(InjectedHead {
            params: fresh,
            sign: -1.0,
            trainable: false,
            init_norm,
        });
        self.generation += 1;
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        if batch.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let mut layers: Vec<LayerTrace> = Vec::with_capacity(self.specs.len());
        for (i, (spec, p)) in self.specs.iter().zip(&self.params).enumerate() {
            let input = if i == 0 { batch } else { &layers[i - 1].postact };
            let t = layer_forward(spec, p, input)?;
            layers.push(t);
        }
        let last = self.specs.len() - 1;
        let mut output = layers[last].postact.clone();
        let mut heads = Vec::with_capacity(self.heads.len());
        if !self.heads.is_empty() {
            let head_in = if last == 0 { batch } else { &layers[last - 1].postact };
            for head in &self.heads {
                let t = layer_forward(&self.specs[last], &head.params, head_in)?;
                for (o, &v) in output.data_mut().iter_mut().zip(t.postact.data()) {
                    *o += head.sign * v;
                }
                heads.push(t);
            }
        }
        Ok(ForwardTrace {
            input: batch.clone(),
            layers,
            heads,
            output,
        })
    }

    /// Convenience: forward pass returning only the outputs.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch)?.output)
    }

    /// Reverse-mode gradients of `Σ output ⊙ output_grad`.
    ///
    /// Frozen units receive zero gradients and do not propagate to their
    /// inputs, so the torso learns only through trainable heads after an
    /// injection.
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Matrix) -> Result<Gradients> {
        if trace.layers.len() != self.specs.len() || trace.heads.len() != self.heads.len() {
            return Err(Error::invalid("trace does not belong to this network"));
        }
        if output_grad.shape() != trace.output.shape() {
            return Err(Error::invalid(format!(
                "output grad shape {:?} != output shape {:?}",
                output_grad.shape(),
                trace.output.shape()
            )));
        }
        let n_layers = self.specs.len();
        let last = n_layers - 1;
        let mut unit_grads: Vec<Option<LayerParams>> = vec![None; self.unit_count()];
        let mut preact_grads: Vec<Option<Matrix>> = vec![None; self.unit_count()];

        // gradient arriving at the post-activation of the layer being walked
        let mut carry: Option<Matrix> = None;
        let head_in = trace.layer_input(last);

        // The output layer and every head read the same input; sum what
        // the trainable ones send back to it.
        let accumulate = |gin: Option<Matrix>, carry: &mut Option<Matrix>| {
            if let Some(gin) = gin {
                match carry {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(gin.data()) {
                            *a += v;
                        }
                    }
                    None => *carry = Some(gin),
                }
            }
        };
        for (h, head) in self.heads.iter().enumerate() {
            if !head.trainable {
                continue;
            }
            let unit = n_layers + h;
            let g_post = output_grad.map(|v| head.sign * v);
            let (g, gz, gin) = layer_backward(
                &self.specs[last],
                &head.params,
                &trace.heads[h],
                head_in,
                &g_post,
                last > 0,
            );
            unit_grads[unit] = Some(g);
            preact_grads[unit] = Some(gz);
            accumulate(gin, &mut carry);
        }
        if !self.frozen[last] {
            let (g, gz, gin) = layer_backward(
                &self.specs[last],
                &self.params[last],
                &trace.layers[last],
                head_in,
                output_grad,
                last > 0,
            );
            unit_grads[last] = Some(g);
            preact_grads[last] = Some(gz);
            accumulate(gin, &mut carry);
        }
        for l in (0..last).rev() {
            self.backward_layer(l, trace, &mut carry, &mut unit_grads, &mut preact_grads);
        }

        let units = unit_grads
            .into_iter()
            .enumerate()
            .map(|(u, g)| g.unwrap_or_else(|| self.unit_params(u).zeros_like()))
            .collect();
        let preact_grads = preact_grads
            .into_iter()
            .enumerate()
            .map(|(u, g)| {
                g.unwrap_or_else(|| Matrix::zeros(trace.batch_size(), self.unit_spec(u).out_dim))
            })
            .collect();
        Ok(Gradients {
            units,
            preact_grads,
        })
    }

    fn backward_layer(
        &self,
        l: usize,
        trace: &ForwardTrace,
        carry: &mut Option<Matrix>,
        unit_grads: &mut [Option<LayerParams>],
        preact_grads: &mut [Option<Matrix>],
    ) {
        let Some(g_post) = carry.take() else {
            return;
        };
        if self.frozen[l] {
            return;
        }
        let (g, gz, gin) = layer_backward(
            &self.specs[l],
            &self.params[l],
            &trace.layers[l],
            trace.layer_input(l),
            &g_post,
            l > 0,
        );
        unit_grads[l] = Some(g);
        preact_grads[l] = Some(gz);
        *carry = gin;
    }
}

fn check_layer_shape(spec: &LayerSpec, p: &LayerParams, idx: usize) -> Result<()> {
    let ok = p.weight.shape() == (spec.out_dim, spec.in_dim)
        && p.bias.len() == spec.out_dim
        && p.norm.is_some() == spec.layer_norm
        && p
            .norm
            .as_ref()
            .is_none_or(|n| n.gain.len() == spec.out_dim && n.offset.len() == spec.out_dim);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("unit {idx} parameters do not match its spec")))
    }
}

fn layer_forward(spec: &LayerSpec, p: &LayerParams, input: &Matrix) -> Result<LayerTrace> {
    let mut pre = input.matmul_t(&p.weight)?;
    let width = spec.out_dim;
    for r in 0..pre.rows() {
        for (v, b) in pre.row_mut(r).iter_mut().zip(&p.bias) {
            *v += b;
        }
    }
    let normed = if let Some(norm) = &p.norm {
        let mut xhat = Matrix::zeros(pre.rows(), width);
        let mut inv_stds = Vec::with_capacity(pre.rows());
        for r in 0..pre.rows() {
            let row = pre.row_mut(r);
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            let xr = xhat.row_mut(r);
            for j in 0..width {
                xr[j] = (row[j] - mean) * inv;
                row[j] = norm.gain[j] * xr[j] + norm.offset[j];
            }
            inv_stds.push(inv);
        }
        Some((xhat, inv_stds))
    } else {
        None
    };
    let out_w = spec.output_width();
    let mut post = Matrix::zeros(pre.rows(), out_w);
    for r in 0..pre.rows() {
        spec.activation.apply(pre.row(r), post.row_mut(r));
    }
    Ok(LayerTrace {
        preact: pre,
        postact: post,
        normed,
    })
}

/// Returns (parameter grads, grad w.r.t. linear output, grad w.r.t. input).
fn layer_backward(
    spec: &LayerSpec,
    p: &LayerParams,
    t: &LayerTrace,
    input: &Matrix,
    g_post: &Matrix,
    need_input_grad: bool,
) -> (LayerParams, Matrix, Option<Matrix>) {
    let rows = g_post.rows();
    let width = spec.out_dim;
    let mut g_pre = Matrix::zeros(rows, width);
    for r in 0..rows {
        spec.activation
            .backward(t.preact.row(r), t.postact.row(r), g_post.row(r), g_pre.row_mut(r));
    }
    let mut grads = p.zeros_like();
    let g_lin = match (&p.norm, &t.normed, &mut grads.norm) {
        (Some(norm), Some((xhat, inv_stds)), Some(gnorm)) => {
            let mut g_lin = Matrix::zeros(rows, width);
            let mut dxhat = vec![0.0; width];
            for r in 0..rows {
                let gp = g_pre.row(r);
                let xr = xhat.row(r);
                let mut mean_d = 0.0;
                let mut mean_dx = 0.0;
                for j in 0..width {
                    gnorm.gain[j] += gp[j] * xr[j];
                    gnorm.offset[j] += gp[j];
                    dxhat[j] = gp[j] * norm.gain[j];
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * xr[j];
                }
                mean_d /= width as f64;
                mean_dx /= width as f64;
                let inv = inv_stds[r];
                let out = g_lin.row_mut(r);
                for j in 0..width {
                    out[j] = inv * (dxhat[j] - mean_d - xr[j] * mean_dx);
                }
            }
            g_lin
        }
        _ => g_pre,
    };
    grads.weight = g_lin.t_matmul(input).expect("shapes follow the trace");
    for r in 0..rows {
        for (b, g) in grads.bias.iter_mut().zip(g_lin.row(r)) {
            *b += g;
        }
    }
    let g_in = need_input_grad.then(|| g_lin.matmul(&p.weight).expect("shapes follow the trace"));
    (grads, g_lin, g_in)
}
