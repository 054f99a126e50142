//! Recomputing the metric suite from a checkpoint, without training.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::{collect_metrics, MetricLine, MetricReport};
use crate::net::load_checkpoint;

use super::probe::ProbeSpec;

#[derive(Debug, Deserialize)]
struct Meta {
    role: String,
    step: u64,
    seed: u64,
    tau: f64,
    probe: ProbeSpec,
    #[serde(default)]
    grad_norms: BTreeMap<String, f64>,
}

/// Metrics of one checkpointed network.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub role: String,
    pub step: u64,
    pub reports: Vec<MetricReport>,
}

impl Replay {
    /// Log lines in the same form the run wrote them.
    pub fn lines(&self) -> Vec<MetricLine> {
        self.reports.iter().flat_map(|r| r.lines(&self.role)).collect()
    }
}

/// Rebuilds the probe batch recorded in the checkpoint (optionally under
/// another seed) and recomputes every metric. Gradient norms need the
/// training minibatch, so they are read from the checkpoint rather than
/// recomputed.
pub fn replay_metrics(manifest_path: &Path, probe_seed: Option<u64>) -> Result<Replay> {
    let (net, manifest) = load_checkpoint(manifest_path)?;
    let meta: Meta = serde_json::from_value(manifest.meta.clone())
        .map_err(|e| Error::Checkpoint(format!("checkpoint lacks run metadata: {e}")))?;
    let spec = meta.probe.with_seed(probe_seed.unwrap_or(meta.seed));
    let probe = spec.build()?;
    let mut reports = collect_metrics(&net, &probe, None, None, meta.tau, meta.step)?;
    for r in &mut reports {
        r.grad_norm = meta.grad_norms.get(&r.scope).copied();
    }
    Ok(Replay { role: meta.role, step: meta.step, reports })
}
