//! Plasticity diagnostics: dormant-unit ratio, fraction of active units,
//! spectral ranks of the representation, weight difference and gradient
//! norm.
//!
//! Stable rank follows the cumulative-spectrum definition
//! `min{k : Σ_{i≤k} σ_i / Σ_j σ_j > 0.99}`, not the textbook
//! `‖F‖²_F / σ₁²` ratio.

mod report;

pub use report::{collect_metrics, MetricLine, MetricReport, AGGREGATE_SCOPE};

use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Gradients, LayerParams, NetworkState};
use crate::numkit::{svd_values, Matrix};

/// Default dormancy threshold.
pub const DEFAULT_TAU: f64 = 0.025;

/// Fraction of the ℓ₁ spectrum mass a stable-rank prefix must exceed.
pub const STABLE_RANK_MASS: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFractions {
    pub per_layer: Vec<f64>,
    pub overall: f64,
}

/// Normalized score `s_i = E|h_i| / ((1/H) Σ_k E|h_k|)` per neuron (column).
/// `None` when the layer's mean absolute activity is exactly zero.
pub fn neuron_scores(post: &Matrix) -> Option<Vec<f64>> {
    let (n, h) = post.shape();
    let mut mean_abs = vec![0.0; h];
    for r in 0..n {
        for (m, v) in mean_abs.iter_mut().zip(post.row(r)) {
            *m += v.abs();
        }
    }
    mean_abs.iter_mut().for_each(|m| *m /= n as f64);
    let layer_mean = mean_abs.iter().sum::<f64>() / h as f64;
    if layer_mean == 0.0 {
        return None;
    }
    Some(mean_abs.into_iter().map(|m| m / layer_mean).collect())
}

/// `true` for τ-dormant neurons. A layer with no activity at all is
/// entirely dormant.
pub fn dormant_mask(post: &Matrix, tau: f64) -> Vec<bool> {
    match neuron_scores(post) {
        Some(s) => s.into_iter().map(|v| v <= tau).collect(),
        None => vec![true; post.cols()],
    }
}

pub fn dormant_ratio_layers(posts: &[&Matrix], tau: f64) -> Result<LayerFractions> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tau must be non-negative, got {tau}")));
    }
    if posts.is_empty() || posts.iter().any(|p| p.rows() == 0 || p.cols() == 0) {
        return Err(Error::invalid("dormancy needs at least one sample per layer"));
    }
    let mut dormant_total = 0usize;
    let mut total = 0usize;
    let mut per_layer = Vec::with_capacity(posts.len());
    for p in posts {
        let d = dormant_mask(p, tau).into_iter().filter(|&b| b).count();
        per_layer.push(d as f64 / p.cols() as f64);
        dormant_total += d;
        total += p.cols();
    }
    Ok(LayerFractions {
        per_layer,
        overall: dormant_total as f64 / total as f64,
    })
}

/// Ratio of τ-dormant units over the hidden layers of a trace.
pub fn dormant_ratio(trace: &ForwardTrace, tau: f64) -> Result<LayerFractions> {
    dormant_ratio_layers(&trace.hidden_postacts(), tau)
}

pub fn active_fraction_layers(posts: &[&Matrix]) -> Result<LayerFractions> {
    if posts.is_empty() || posts.iter().any(|p| p.rows() == 0 || p.cols() == 0) {
        return Err(Error::invalid("active fraction needs a non-empty trace"));
    }
    let mut active_total = 0usize;
    let mut total = 0usize;
    let mut per_layer = Vec::with_capacity(posts.len());
    for p in posts {
        let a = p.data().iter().filter(|&&v| v > 0.0).count();
        per_layer.push(a as f64 / p.data().len() as f64);
        active_total += a;
        total += p.data().len();
    }
    Ok(LayerFractions {
        per_layer,
        overall: active_total as f64 / total as f64,
    })
}

/// Fraction of active (strictly positive) post-activations, averaged over
/// the probe batch. Applied verbatim to every activation kind.
pub fn active_fraction(trace: &ForwardTrace) -> Result<LayerFractions> {
    active_fraction_layers(&trace.hidden_postacts())
}

pub fn stable_rank_from_values(sv: &[f64]) -> Result<usize> {
    let total: f64 = sv.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedRank);
    }
    let mut cum = 0.0;
    for (k, s) in sv.iter().enumerate() {
        cum += s;
        if cum / total > STABLE_RANK_MASS {
            return Ok(k + 1);
        }
    }
    Ok(sv.len())
}

pub fn stable_rank(f: &Matrix) -> Result<usize> {
    stable_rank_from_values(&svd_values(f)?)
}

/// `exp(H(p))` with `p_k = σ_k / ‖σ‖₁`, evaluated as
/// `‖σ‖₁ · exp(-Σ p_k ln σ_k)`, which is algebraically identical and exact
/// for flat spectra.
pub fn effective_rank_from_values(sv: &[f64]) -> Result<f64> {
    let total: f64 = sv.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UndefinedRank);
    }
    let weighted_log: f64 = sv
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| (s / total) * s.ln())
        .sum();
    Ok(total * (-weighted_log).exp())
}

pub fn effective_rank(f: &Matrix) -> Result<f64> {
    effective_rank_from_values(&svd_values(f)?)
}

/// L2 distance between two parameter states, plus the same value divided
/// by the parameter count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDifference {
    pub l2: f64,
    pub per_param: f64,
}

fn diff_sq(a: &LayerParams, b: &LayerParams) -> (f64, usize) {
    let mut sq = 0.0;
    let mut n = 0;
    for (x, y) in a.slices().into_iter().zip(b.slices()) {
        for (u, v) in x.iter().zip(y) {
            sq += (u - v) * (u - v);
        }
        n += x.len();
    }
    (sq, n)
}

pub fn param_difference(a: &[LayerParams], b: &[LayerParams]) -> Result<WeightDifference> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| !x.same_shape(y)) {
        return Err(Error::invalid("parameter sets have different architectures"));
    }
    let (sq, n) = a
        .iter()
        .zip(b)
        .map(|(x, y)| diff_sq(x, y))
        .fold((0.0, 0), |(s, c), (ds, dc)| (s + ds, c + dc));
    let l2 = sq.sqrt();
    Ok(WeightDifference {
        l2,
        per_param: if n == 0 { 0.0 } else { l2 / n as f64 },
    })
}

/// Weight difference over every unit, including injected heads.
pub fn weight_difference(a: &NetworkState, b: &NetworkState) -> Result<WeightDifference> {
    if a.specs() != b.specs() || a.unit_count() != b.unit_count() {
        return Err(Error::invalid("networks have different architectures"));
    }
    let ua: Vec<LayerParams> = (0..a.unit_count()).map(|u| a.unit_params(u).clone()).collect();
    let ub: Vec<LayerParams> = (0..b.unit_count()).map(|u| b.unit_params(u).clone()).collect();
    param_difference(&ua, &ub)
}

/// `sqrt(Σ_p ‖∇θ_p‖²)` over all units.
pub fn gradient_norm(grads: &Gradients) -> Result<f64> {
    let mut sq = 0.0;
    for (layer, u) in grads.units.iter().enumerate() {
        for s in u.slices() {
            for v in s {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "gradient".into(),
                        layer,
                    });
                }
                sq += v * v;
            }
        }
    }
    Ok(sq.sqrt())
}
