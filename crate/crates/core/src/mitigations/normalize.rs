//! Weight-norm projection for normalize-and-project.

use crate::error::{Error, Result};
use crate::net::NetworkState;

/// Rescales every trainable weight matrix to the Frobenius norm it had at
/// initialization. Biases and normalization affine parameters are left
/// untouched. Injected heads use the norm recorded at injection time.
pub fn nap_project(net: &mut NetworkState) -> Result<()> {
    let n = net.num_layers();
    let hidden = n.saturating_sub(1);
    if let Some(l) = (0..hidden).find(|&l| !net.specs()[l].layer_norm) {
        return Err(Error::Spec(format!(
            "normalize-and-project needs layer_norm on every hidden layer (layer {l} has none)"
        )));
    }
    let targets: Vec<f64> = (0..n)
        .map(|l| net.init_snapshot()[l].weight.frobenius_norm())
        .chain(net.heads().iter().map(|h| h.init_norm))
        .collect();
    let mask = net.trainable_mask();
    for (u, target) in targets.into_iter().enumerate() {
        if !mask[u] {
            continue;
        }
        let w = &mut net.unit_params_mut(u).weight;
        let norm = w.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::SingularProjection { layer: u });
        }
        w.scale(target / norm);
    }
    Ok(())
}
