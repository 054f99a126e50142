//! TRAC: a parameter-free wrapper that interpolates between a reference
//! point and the iterate of a base optimizer.
//!
//! Recursion per step `t`, with `Δ_t = θ̃_t − θ_ref` the base iterate's
//! offset from the reference and `g_t` the gradient at the played point:
//!
//! ```text
//! h_t     = ⟨g_t, Δ_t⟩
//! v_j     ← β_j² v_j + h_t²
//! σ_j     ← β_j σ_j − h_t
//! s_j     = max(0, ε / erfi(1/√2) · erfi(σ_j / (√(2 v_j) + ε)))
//! S       = Σ_j s_j
//! θ̃_{t+1} = base_step(θ̃_t, g_t)
//! θ_{t+1} = θ_ref + S · (θ̃_{t+1} − θ_ref)
//! ```
//!
//! with β ∈ {0.9, 0.99, 0.999, 0.9999} and ε = 1e-8. The erfi argument is
//! clamped to the supported domain; clamps are counted.

use super::adam::Adam;
use crate::error::{Error, Result};
use crate::net::{Gradients, LayerParams, NetworkState};
use crate::numkit::{erfi, ERFI_DOMAIN};

pub const TRAC_BETAS: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];
pub const TRAC_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Trac {
    pub base: Adam,
    reference: Vec<LayerParams>,
    iterate: Vec<LayerParams>,
    v: Vec<f64>,
    sigma: Vec<f64>,
    scale: f64,
    saturations: u64,
    generation: u64,
}

/// `θ_ref + s · (candidate − θ_ref)` slice by slice.
pub fn trac_combine(reference: &[LayerParams], candidate: &[LayerParams], s: f64) -> Vec<LayerParams> {
    reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| {
            let mut out = r.clone();
            for ((o, rs), cs) in out.slices_mut().into_iter().zip(r.slices()).zip(c.slices()) {
                for ((oi, ri), ci) in o.iter_mut().zip(rs).zip(cs) {
                    *oi = ri + s * (ci - ri);
                }
            }
            out
        })
        .collect()
}

fn snapshot(net: &NetworkState) -> Vec<LayerParams> {
    (0..net.unit_count()).map(|u| net.unit_params(u).clone()).collect()
}

impl Trac {
    /// Activates TRAC with the current parameters as the reference point.
    pub fn new(net: &NetworkState, lr: f64) -> Self {
        let reference = snapshot(net);
        Trac {
            base: Adam::new(lr),
            iterate: reference.clone(),
            reference,
            v: vec![0.0; TRAC_BETAS.len()],
            sigma: vec![0.0; TRAC_BETAS.len()],
            scale: 0.0,
            saturations: 0,
            generation: net.generation(),
        }
    }

    /// Current aggregate scale `S`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn saturations(&self) -> u64 {
        self.saturations
    }

    pub fn reference(&self) -> &[LayerParams] {
        &self.reference
    }

    /// Tuner update from the inner product `h`; returns the new scale.
    pub fn update_tuners(&mut self, h: f64) -> Result<f64> {
        if !h.is_finite() {
            return Err(Error::NonFinite { what: "trac inner product".into(), layer: 0 });
        }
        let norm = TRAC_EPS / erfi(std::f64::consts::FRAC_1_SQRT_2)?;
        let mut total = 0.0;
        for ((beta, v), sigma) in TRAC_BETAS.iter().zip(&mut self.v).zip(&mut self.sigma) {
            *v = beta * beta * *v + h * h;
            *sigma = beta * *sigma - h;
            let mut arg = *sigma / ((2.0 * *v).sqrt() + TRAC_EPS);
            if arg.abs() > ERFI_DOMAIN {
                self.saturations += 1;
                arg = arg.clamp(-ERFI_DOMAIN, ERFI_DOMAIN);
            }
            total += (norm * erfi(arg)?).max(0.0);
        }
        self.scale = total;
        Ok(total)
    }

    pub fn step(&mut self, net: &mut NetworkState, grads: &Gradients) -> Result<()> {
        if net.generation() != self.generation || self.reference.len() != net.unit_count() {
            // the architecture changed under us: restart from the current point
            *self = Trac::new(net, self.base.lr);
        }
        let mut h = 0.0;
        for (u, g) in grads.units.iter().enumerate() {
            if !net.unit_trainable(u) {
                continue;
            }
            for ((gs, xs), rs) in g.slices().into_iter().zip(self.iterate[u].slices()).zip(self.reference[u].slices()) {
                for ((gi, xi), ri) in gs.iter().zip(xs).zip(rs) {
                    h += gi * (xi - ri);
                }
            }
        }
        let s = self.update_tuners(h)?;
        self.iterate = self.base.propose_from(net, &self.iterate, grads)?;
        let played = trac_combine(&self.reference, &self.iterate, s);
        for (u, p) in played.into_iter().enumerate() {
            if net.unit_trainable(u) {
                *net.unit_params_mut(u) = p;
            }
        }
        Ok(())
    }
}
