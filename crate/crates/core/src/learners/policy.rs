//! Action distributions: categorical over logits and a diagonal Gaussian
//! with a state-independent log standard deviation.

use crate::numkit::RngStream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable log-softmax of one row of logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Log-probability, entropy and their logit gradients for a categorical
/// policy evaluated at `action`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEval {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob: Vec<f64>,
    pub d_entropy: Vec<f64>,
}

pub fn categorical_eval(logits: &[f64], action: usize) -> CategoricalEval {
    let logp = log_softmax(logits);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
    let d_log_prob = p
        .iter()
        .enumerate()
        .map(|(i, pi)| if i == action { 1.0 - pi } else { -pi })
        .collect();
    let d_entropy = p.iter().zip(&logp).map(|(pi, li)| -pi * (li + entropy)).collect();
    CategoricalEval { log_prob: logp[action], entropy, d_log_prob, d_entropy }
}

pub fn categorical_sample(logits: &[f64], rng: &mut RngStream) -> usize {
    rng.categorical(&softmax(logits))
}

/// Diagonal Gaussian evaluation with gradients w.r.t. the mean and the
/// log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEval {
    pub log_prob: f64,
    pub entropy: f64,
    pub d_log_prob_mean: Vec<f64>,
    pub d_log_prob_log_std: Vec<f64>,
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> GaussianEval {
    let mut log_prob = 0.0;
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_ls = Vec::with_capacity(mean.len());
    for ((m, ls), a) in mean.iter().zip(log_std).zip(action) {
        let std = ls.exp();
        let z = (a - m) / std;
        log_prob += -0.5 * z * z - ls - 0.5 * LN_2PI;
        d_mean.push(z / std);
        d_ls.push(z * z - 1.0);
    }
    GaussianEval {
        log_prob,
        entropy: gaussian_entropy(log_std),
        d_log_prob_mean: d_mean,
        d_log_prob_log_std: d_ls,
    }
}

/// `Σ (½ + ½ ln 2π + log σ_i)`; its gradient w.r.t. each log σ is 1.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + 0.5 * LN_2PI + ls).sum()
}

/// Samples an action and returns it with its (unsquashed) log-probability.
pub fn gaussian_policy(mean: &[f64], log_std: &[f64], rng: &mut RngStream) -> (Vec<f64>, f64, f64) {
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(m, ls)| rng.normal(*m, ls.exp()))
        .collect();
    let eval = gaussian_log_prob(mean, log_std, &action);
    (action, eval.log_prob, eval.entropy)
}
