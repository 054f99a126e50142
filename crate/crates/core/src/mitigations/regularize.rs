//! Loss-augmentation regularizers and their exact gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Gradients, NetworkState};
use crate::numkit::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    /// `α Σ θ²` over trainable weights and biases.
    L2,
    /// `α Σ (θ - θ_init)²` over trainable base-layer parameters.
    Regenerative,
    /// `α Σ_W ‖W Wᵀ - s I‖_F` over trainable hidden-layer weights.
    Parseval,
}

/// Regularizer value and its gradient in the layout of `Gradients`.
/// `scale` is the Parseval target `s` and ignored by the other kinds.
pub fn reg_loss(kind: RegKind, net: &NetworkState, alpha: f64, scale: f64) -> Result<(f64, Gradients)> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("regularizer alpha must be >= 0, got {alpha}")));
    }
    if kind == RegKind::Parseval && !(scale > 0.0) {
        return Err(Error::invalid(format!("parseval scale must be > 0, got {scale}")));
    }
    let mut grads = Gradients::zeros_like(net);
    let mask = net.trainable_mask();
    let mut value = 0.0;
    match kind {
        RegKind::L2 => {
            for (u, g) in grads.units.iter_mut().enumerate() {
                if !mask[u] {
                    continue;
                }
                let p = net.unit_params(u);
                for (gs, ps) in [(g.weight.data_mut(), p.weight.data()), (&mut g.bias[..], &p.bias[..])] {
                    for (gi, pi) in gs.iter_mut().zip(ps) {
                        value += pi * pi;
                        *gi = 2.0 * alpha * pi;
                    }
                }
            }
        }
        RegKind::Regenerative => {
            for l in 0..net.num_layers() {
                if !mask[l] {
                    continue;
                }
                let (p, p0) = (&net.params()[l], &net.init_snapshot()[l]);
                for ((gs, ps), qs) in grads.units[l].slices_mut().into_iter().zip(p.slices()).zip(p0.slices()) {
                    for ((gi, pi), qi) in gs.iter_mut().zip(ps).zip(qs) {
                        let d = pi - qi;
                        value += d * d;
                        *gi = 2.0 * alpha * d;
                    }
                }
            }
        }
        RegKind::Parseval => {
            let n = net.num_layers();
            for l in 0..n.saturating_sub(1) {
                if !mask[l] {
                    continue;
                }
                let w = &net.params()[l].weight;
                let (norm, grad) = parseval_term(w, scale)?;
                value += norm;
                let g = grads.units[l].weight.data_mut();
                for (gi, v) in g.iter_mut().zip(grad.data()) {
                    *gi = alpha * v;
                }
            }
        }
    }
    Ok((alpha * value, grads))
}

/// `‖W Wᵀ - sI‖_F` and its gradient `2 M W / ‖M‖` (zero when `M = 0`).
pub fn parseval_term(w: &Matrix, scale: f64) -> Result<(f64, Matrix)> {
    let mut m = w.matmul_t(w)?;
    for i in 0..m.rows() {
        let v = m.get(i, i) - scale;
        m.set(i, i, v);
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok((0.0, Matrix::zeros(w.rows(), w.cols())));
    }
    let mut g = m.matmul(w)?;
    g.scale(2.0 / norm);
    Ok((norm, g))
}
