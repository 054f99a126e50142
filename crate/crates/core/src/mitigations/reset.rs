//! Reset-based interventions: shrink-and-perturb, plasticity injection,
//! dormant-neuron recycling and layer resets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::dormant_mask;
use crate::net::{LayerParams, NetworkState};
use crate::numkit::RngStream;

/// Draws a fresh set of unit parameters (base layers, then heads) from
/// the declared init distributions, in unit order.
pub fn fresh_draw(net: &NetworkState, rng: &mut RngStream) -> Vec<LayerParams> {
    (0..net.unit_count())
        .map(|u| LayerParams::draw(net.unit_spec(u), rng))
        .collect()
}

/// `θ ← (1-β)·θ + β·target` on every trainable unit, including the
/// normalization affine parameters.
pub fn shrink_toward(net: &mut NetworkState, beta: f64, target: &[LayerParams]) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("shrink-perturb beta {beta} outside [0, 1]")));
    }
    if target.len() != net.unit_count() {
        return Err(Error::invalid("target parameter set has the wrong unit count"));
    }
    let alpha = 1.0 - beta;
    let mask = net.trainable_mask();
    for ((unit, t), trainable) in net.units_mut().into_iter().zip(target).zip(mask) {
        if !trainable {
            continue;
        }
        if !unit.same_shape(t) {
            return Err(Error::invalid("target parameter shapes differ"));
        }
        for (p, f) in unit.slices_mut().into_iter().zip(t.slices()) {
            for (pi, fi) in p.iter_mut().zip(f) {
                *pi = alpha * *pi + beta * fi;
            }
        }
    }
    Ok(())
}

/// Shrink-and-perturb toward a fresh draw from the init distribution
/// (not the stored snapshot).
pub fn shrink_perturb(net: &mut NetworkState, beta: f64, rng: &mut RngStream) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!("shrink-perturb beta {beta} outside [0, 1]")));
    }
    let fresh = fresh_draw(net, rng);
    shrink_toward(net, beta, &fresh)
}

/// Freezes the current head and adds a fresh trainable head plus a frozen
/// negated copy of it, so outputs are unchanged at injection time.
/// Repeated injections stack another pair.
pub fn inject_plasticity(net: &mut NetworkState, rng: &mut RngStream) {
    let last = net.num_layers() - 1;
    let fresh = LayerParams::draw(&net.specs()[last], rng);
    net.push_injection(fresh);
}

/// Recycles τ-dormant hidden neurons on `probe`: their incoming weights,
/// bias and norm affine are redrawn, their outgoing weights zeroed.
/// Returns how many neurons were reset.
///
/// For width-doubling activations a neuron is reset only when all of its
/// output units are dormant. With LayerNorm on the layer, other neurons
/// of that layer see new normalization statistics, so outputs are only
/// preserved exactly on layers without normalization.
pub fn redo_reset(
    net: &mut NetworkState,
    probe: &crate::numkit::Matrix,
    tau: f64,
    rng: &mut RngStream,
) -> Result<usize> {
    if probe.rows() == 0 {
        return Err(Error::invalid("ReDo needs a non-empty probe batch"));
    }
    let n_layers = net.num_layers();
    if n_layers < 2 {
        return Ok(0);
    }
    let trace = net.forward(probe)?;
    let mut total = 0;
    for l in 0..n_layers - 1 {
        let spec = net.specs()[l].clone();
        if net.frozen()[l] {
            continue;
        }
        let mask = dormant_mask(&trace.layers[l].postact, tau);
        let width = spec.out_dim;
        let factor = spec.activation.width_factor();
        let dead: Vec<usize> = (0..width)
            .filter(|&k| (0..factor).all(|f| mask[f * width + k]))
            .collect();
        if dead.is_empty() {
            continue;
        }
        let fresh = LayerParams::draw(&spec, rng);
        {
            let p = &mut net.params_mut()[l];
            for &k in &dead {
                p.weight.row_mut(k).copy_from_slice(fresh.weight.row(k));
                p.bias[k] = fresh.bias[k];
                if let (Some(n), Some(fnorm)) = (&mut p.norm, &fresh.norm) {
                    n.gain[k] = fnorm.gain[k];
                    n.offset[k] = fnorm.offset[k];
                }
            }
        }
        // zero the outgoing columns in every consumer of this layer
        let consumers: Vec<usize> = if l + 1 == n_layers - 1 {
            (n_layers - 1..net.unit_count()).collect()
        } else {
            vec![l + 1]
        };
        for u in consumers {
            let w = &mut net.unit_params_mut(u).weight;
            for r in 0..w.rows() {
                let row = w.row_mut(r);
                for &k in &dead {
                    for f in 0..factor {
                        row[f * width + k] = 0.0;
                    }
                }
            }
        }
        total += dead.len();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetScope {
    Final,
    All,
}

/// Redraws the selected base layers from their init distributions, in
/// layer order. Injected heads are left in place.
pub fn reset_layers(net: &mut NetworkState, scope: ResetScope, rng: &mut RngStream) {
    let n = net.num_layers();
    let range = match scope {
        ResetScope::All => 0..n,
        ResetScope::Final => n - 1..n,
    };
    for l in range {
        let fresh = LayerParams::draw(&net.specs()[l], rng);
        net.params_mut()[l] = fresh;
    }
}
