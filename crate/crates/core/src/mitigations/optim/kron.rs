//! Kronecker-factored preconditioning for dense layers.
//!
//! For a layer with inputs `a` and linear-output gradients `g`, the
//! factors `A = E[a aᵀ]` and `S = E[g gᵀ]` are tracked as exponential
//! moving averages. With weights stored out×in the weight update is
//! `(S + λI)⁻¹ G (A + λI)⁻¹`; the bias uses `(S + λI)⁻¹ g_b` and the
//! normalization affine parameters take a plain gradient step.

use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Gradients, NetworkState};
use crate::numkit::Matrix;

pub const KRON_DAMPING: f64 = 1e-3;
pub const KRON_EMA: f64 = 0.95;
pub const KRON_INV_EVERY: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
struct Factors {
    a: Matrix,
    s: Matrix,
    a_inv: Option<Matrix>,
    s_inv: Option<Matrix>,
    /// Set when the last refresh fell back to diagonal preconditioning.
    diagonal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kron {
    pub lr: f64,
    pub damping: f64,
    pub ema: f64,
    pub inv_every: u64,
    factors: Vec<Option<Factors>>,
    steps: u64,
    fallbacks: u64,
    generation: u64,
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. `None` when the matrix is not numerically positive definite.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    let n = m.rows();
    if n != m.cols() {
        return None;
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l.set(i, i, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    // invert L (lower triangular), then M⁻¹ = L⁻ᵀ L⁻¹
    let mut linv = Matrix::zeros(n, n);
    for j in 0..n {
        linv.set(j, j, 1.0 / l.get(j, j));
        for i in j + 1..n {
            let mut sum = 0.0;
            for k in j..i {
                sum -= l.get(i, k) * linv.get(k, j);
            }
            linv.set(i, j, sum / l.get(i, i));
        }
    }
    let inv = linv.t_matmul(&linv).ok()?;
    inv.is_finite().then_some(inv)
}

fn damped(m: &Matrix, lambda: f64) -> Matrix {
    let mut d = m.clone();
    for i in 0..d.rows() {
        d.set(i, i, d.get(i, i) + lambda);
    }
    d
}

/// `(S + λI)⁻¹ G (A + λI)⁻¹` for `G` stored out×in, `A` in×in, `S` out×out.
pub fn precondition(g: &Matrix, a: &Matrix, s: &Matrix, lambda: f64) -> Result<Matrix> {
    let a_inv = spd_inverse(&damped(a, lambda))
        .ok_or_else(|| Error::invalid("input factor is not positive definite"))?;
    let s_inv = spd_inverse(&damped(s, lambda))
        .ok_or_else(|| Error::invalid("gradient factor is not positive definite"))?;
    s_inv.matmul(g)?.matmul(&a_inv)
}

fn covariance(x: &Matrix, scale: f64) -> Matrix {
    let mut c = x.t_matmul(x).expect("square product");
    c.scale(scale);
    c
}

impl Kron {
    pub fn new(lr: f64) -> Self {
        Kron {
            lr,
            damping: KRON_DAMPING,
            ema: KRON_EMA,
            inv_every: KRON_INV_EVERY,
            factors: Vec::new(),
            steps: 0,
            fallbacks: 0,
            generation: 0,
        }
    }

    /// Number of inverse refreshes that fell back to diagonal scaling.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, net: &mut NetworkState, trace: &ForwardTrace, grads: &Gradients) -> Result<()> {
        let units = net.unit_count();
        if grads.units.len() != units || grads.preact_grads.len() != units {
            return Err(Error::invalid("kron needs per-unit gradients with linear-output grads"));
        }
        if self.factors.len() != units || self.generation != net.generation() {
            self.factors = vec![None; units];
            self.generation = net.generation();
        }
        let batch = trace.batch_size() as f64;
        let refresh = self.steps.is_multiple_of(self.inv_every.max(1));
        self.steps += 1;
        let last = net.num_layers() - 1;
        for u in 0..units {
            if !net.unit_trainable(u) {
                continue;
            }
            let g = &grads.units[u];
            if g.flat().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "gradient".into(), layer: u });
            }
            let input = trace.layer_input(u.min(last));
            // per-sample gradients of a mean loss are rescaled by the batch size
            let a_new = covariance(input, 1.0 / batch);
            let s_new = covariance(&grads.preact_grads[u], batch);
            let f = match &mut self.factors[u] {
                Some(f) => {
                    for (x, y) in f.a.data_mut().iter_mut().zip(a_new.data()) {
                        *x = self.ema * *x + (1.0 - self.ema) * y;
                    }
                    for (x, y) in f.s.data_mut().iter_mut().zip(s_new.data()) {
                        *x = self.ema * *x + (1.0 - self.ema) * y;
                    }
                    f
                }
                slot @ None => slot.insert(Factors { a: a_new, s: s_new, a_inv: None, s_inv: None, diagonal: false }),
            };
            if refresh || f.a_inv.is_none() {
                let ai = spd_inverse(&damped(&f.a, self.damping));
                let si = spd_inverse(&damped(&f.s, self.damping));
                match (ai, si) {
                    (Some(ai), Some(si)) => {
                        f.a_inv = Some(ai);
                        f.s_inv = Some(si);
                        f.diagonal = false;
                    }
                    _ => {
                        self.fallbacks += 1;
                        f.a_inv = Some(diag_inverse(&f.a, self.damping));
                        f.s_inv = Some(diag_inverse(&f.s, self.damping));
                        f.diagonal = true;
                    }
                }
            }
            let (a_inv, s_inv) = (f.a_inv.as_ref().unwrap(), f.s_inv.as_ref().unwrap());
            let dw = s_inv.matmul(&g.weight)?.matmul(a_inv)?;
            let db = s_inv.matmul(&Matrix::from_vec(g.bias.len(), 1, g.bias.clone())?)?;
            let lr = self.lr;
            let p = net.unit_params_mut(u);
            for (w, d) in p.weight.data_mut().iter_mut().zip(dw.data()) {
                *w -= lr * d;
            }
            for (b, d) in p.bias.iter_mut().zip(db.data()) {
                *b -= lr * d;
            }
            if let (Some(n), Some(gn)) = (&mut p.norm, &g.norm) {
                for (x, d) in n.gain.iter_mut().zip(&gn.gain).chain(n.offset.iter_mut().zip(&gn.offset)) {
                    *x -= lr * d;
                }
            }
        }
        Ok(())
    }
}

fn diag_inverse(m: &Matrix, lambda: f64) -> Matrix {
    let d: Vec<f64> = (0..m.rows())
        .map(|i| {
            let v = m.get(i, i) + lambda;
            if v > 0.0 && v.is_finite() {
                1.0 / v
            } else {
                1.0
            }
        })
        .collect();
    Matrix::from_diag(&d)
}
