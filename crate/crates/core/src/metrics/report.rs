use serde::{Deserialize, Serialize};

use super::{
    active_fraction_layers, dormant_ratio_layers, effective_rank_from_values, gradient_norm,
    param_difference, stable_rank_from_values, weight_difference, WeightDifference,
};
use crate::error::{Error, Result};
use crate::net::{Gradients, NetworkState};
use crate::numkit::{svd_values, Matrix};

pub const AGGREGATE_SCOPE: &str = "all";

/// One bundle of diagnostics for a scope (a hidden layer or the whole net).
///
/// Rank fields are `None` when the feature matrix is identically zero
/// (a fully dead layer has no defined rank).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub step: u64,
    pub scope: String,
    pub rdu: f64,
    pub fau: f64,
    pub stable_rank: Option<usize>,
    pub effective_rank: Option<f64>,
    pub weight_diff: f64,
    pub weight_diff_per_param: f64,
    pub grad_norm: Option<f64>,
}

/// One JSONL record: `{"step", "scope", "metric", "value"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub step: u64,
    pub scope: String,
    pub metric: String,
    pub value: f64,
}

impl MetricReport {
    /// Flattens into log lines; `prefix` namespaces the scope (e.g. `actor`).
    pub fn lines(&self, prefix: &str) -> Vec<MetricLine> {
        let scope = if prefix.is_empty() {
            self.scope.clone()
        } else {
            format!("{prefix}/{}", self.scope)
        };
        let mut out = Vec::with_capacity(7);
        let mut push = |metric: &str, value: f64| {
            out.push(MetricLine {
                step: self.step,
                scope: scope.clone(),
                metric: metric.to_string(),
                value,
            })
        };
        push("rdu", self.rdu);
        push("fau", self.fau);
        if let Some(sr) = self.stable_rank {
            push("stable_rank", sr as f64);
        }
        if let Some(er) = self.effective_rank {
            push("effective_rank", er);
        }
        push("weight_diff", self.weight_diff);
        push("weight_diff_per_param", self.weight_diff_per_param);
        if let Some(gn) = self.grad_norm {
            push("grad_norm", gn);
        }
        out
    }
}

fn ranks(f: &Matrix) -> Result<(Option<usize>, Option<f64>)> {
    let sv = svd_values(f)?;
    match (stable_rank_from_values(&sv), effective_rank_from_values(&sv)) {
        (Ok(sr), Ok(er)) => Ok((Some(sr), Some(er))),
        (Err(Error::UndefinedRank), _) | (_, Err(Error::UndefinedRank)) => Ok((None, None)),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

/// Runs the whole suite on a probe batch: one report per hidden layer
/// (`layer{i}`) and an aggregate (`all`).
///
/// Aggregate ranks use the representation fed to the output head.
/// Weight difference is taken against `baseline` when given, otherwise
/// against the network's own init snapshot (base layers only).
pub fn collect_metrics(
    net: &NetworkState,
    probe: &Matrix,
    grads: Option<&Gradients>,
    baseline: Option<&NetworkState>,
    tau: f64,
    step: u64,
) -> Result<Vec<MetricReport>> {
    let trace = net.forward(probe)?;
    let hidden = trace.hidden_postacts();
    let rdu = dormant_ratio_layers(&hidden, tau)?;
    let fau = active_fraction_layers(&hidden)?;

    let base_params: &[_] = match baseline {
        Some(b) => b.params(),
        None => net.init_snapshot(),
    };
    if base_params.len() != net.num_layers() {
        return Err(Error::invalid("baseline has a different depth"));
    }

    let mut reports = Vec::with_capacity(hidden.len() + 1);
    for (i, post) in hidden.iter().enumerate() {
        let (sr, er) = ranks(post)?;
        let wd = param_difference(
            std::slice::from_ref(&net.params()[i]),
            std::slice::from_ref(&base_params[i]),
        )?;
        let gn = match grads {
            Some(g) => Some(gradient_norm(&Gradients {
                units: vec![g.units[i].clone()],
                preact_grads: Vec::new(),
            })
            .map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite { what, layer: i },
                other => other,
            })?),
            None => None,
        };
        reports.push(MetricReport {
            step,
            scope: format!("layer{i}"),
            rdu: rdu.per_layer[i],
            fau: fau.per_layer[i],
            stable_rank: sr,
            effective_rank: er,
            weight_diff: wd.l2,
            weight_diff_per_param: wd.per_param,
            grad_norm: gn,
        });
    }

    let (sr, er) = ranks(trace.representation())?;
    let wd: WeightDifference = match baseline {
        Some(b) => weight_difference(net, b)?,
        None => param_difference(net.params(), net.init_snapshot())?,
    };
    let gn = grads.map(gradient_norm).transpose()?;
    reports.push(MetricReport {
        step,
        scope: AGGREGATE_SCOPE.to_string(),
        rdu: rdu.overall,
        fau: fau.overall,
        stable_rank: sr,
        effective_rank: er,
        weight_diff: wd.l2,
        weight_diff_per_param: wd.per_param,
        grad_norm: gn,
    });
    Ok(reports)
}
