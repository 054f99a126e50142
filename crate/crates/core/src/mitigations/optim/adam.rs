use crate::error::{Error, Result};
use crate::net::{Gradients, LayerParams, NetworkState};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment buffers for one flat parameter slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SliceAdam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl SliceAdam {
    pub fn new(len: usize) -> Self {
        SliceAdam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != params.len() {
            return Err(Error::invalid("adam buffer length mismatch"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: "adam gradient".into(), layer: 0 });
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Adam over every trainable unit of a network. Buffers are rebuilt when
/// the unit layout changes (e.g. after plasticity injection); buffers of
/// units that survive keep their state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    units: Vec<Vec<SliceAdam>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, units: Vec::new() }
    }

    fn sync(&mut self, net: &NetworkState) {
        let n = net.unit_count();
        let fits = |bufs: &Vec<SliceAdam>, p: &LayerParams| {
            bufs.len() == p.slices().len() && bufs.iter().zip(p.slices()).all(|(b, s)| b.m.len() == s.len())
        };
        self.units.truncate(n);
        for u in 0..n {
            let p = net.unit_params(u);
            if u >= self.units.len() {
                self.units.push(p.slices().iter().map(|s| SliceAdam::new(s.len())).collect());
            } else if !fits(&self.units[u], p) {
                self.units[u] = p.slices().iter().map(|s| SliceAdam::new(s.len())).collect();
            }
        }
    }

    /// Clears all moment estimates.
    pub fn reset(&mut self) {
        self.units.clear();
    }

    pub fn step(&mut self, net: &mut NetworkState, grads: &Gradients) -> Result<()> {
        let candidate = self.propose(net, grads)?;
        for (u, p) in candidate.into_iter().enumerate() {
            *net.unit_params_mut(u) = p;
        }
        Ok(())
    }

    /// Applies one Adam update to a copy of `base` (which must have the
    /// network's unit layout) and returns it. Frozen units are copied
    /// unchanged.
    pub fn propose_from(
        &mut self,
        net: &NetworkState,
        base: &[LayerParams],
        grads: &Gradients,
    ) -> Result<Vec<LayerParams>> {
        if grads.units.len() != net.unit_count() || base.len() != net.unit_count() {
            return Err(Error::invalid("gradient layout does not match the network"));
        }
        self.sync(net);
        let mut out = base.to_vec();
        for (u, (p, g)) in out.iter_mut().zip(&grads.units).enumerate() {
            if !net.unit_trainable(u) {
                continue;
            }
            if g.flat().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "gradient".into(), layer: u });
            }
            for ((ps, gs), buf) in p.slices_mut().into_iter().zip(g.slices()).zip(&mut self.units[u]) {
                buf.step(ps, gs, self.lr)?;
            }
        }
        Ok(out)
    }

    pub fn propose(&mut self, net: &NetworkState, grads: &Gradients) -> Result<Vec<LayerParams>> {
        let base: Vec<LayerParams> = (0..net.unit_count()).map(|u| net.unit_params(u).clone()).collect();
        self.propose_from(net, &base, grads)
    }
}
