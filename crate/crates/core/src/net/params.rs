use serde::{Deserialize, Serialize};

use super::spec::{Init, LayerSpec};
use crate::numkit::{Matrix, RngStream};

/// LayerNorm gain and offset, one entry per pre-activation feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormAffine {
    pub gain: Vec<f64>,
    pub offset: Vec<f64>,
}

/// Parameters of one dense layer. `weight` is `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub norm: Option<NormAffine>,
}

impl LayerParams {
    /// Fresh draw from the layer's declared init distribution.
    ///
    /// Orthogonal init consumes `out·in` normals (two words each) and leaves
    /// the bias at zero; uniform fan-in consumes `out·in + out` uniforms.
    pub fn draw(spec: &LayerSpec, rng: &mut RngStream) -> Self {
        let (out, inp) = (spec.out_dim, spec.in_dim);
        let (weight, bias) = match spec.init {
            Init::Orthogonal { gain } => (orthogonal(out, inp, gain, rng), vec![0.0; out]),
            Init::UniformFanIn => {
                let bound = 1.0 / (inp as f64).sqrt();
                let w: Vec<f64> = (0..out * inp).map(|_| rng.uniform(-bound, bound)).collect();
                let b = (0..out).map(|_| rng.uniform(-bound, bound)).collect();
                (Matrix::from_vec(out, inp, w).expect("sized"), b)
            }
        };
        let norm = spec.layer_norm.then(|| NormAffine {
            gain: vec![1.0; out],
            offset: vec![0.0; out],
        });
        LayerParams { weight, bias, norm }
    }

    pub fn zeros_like(&self) -> Self {
        LayerParams {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
            norm: self.norm.as_ref().map(|n| NormAffine {
                gain: vec![0.0; n.gain.len()],
                offset: vec![0.0; n.offset.len()],
            }),
        }
    }

    /// Parameter tensors in declaration order: weight, bias, gain, offset.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weight.data(), &self.bias];
        if let Some(n) = &self.norm {
            v.push(&n.gain);
            v.push(&n.offset);
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weight.data_mut(), &mut self.bias];
        if let Some(n) = &mut self.norm {
            v.push(&mut n.gain);
            v.push(&mut n.offset);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &LayerParams) -> bool {
        let a = self.slices();
        let b = other.slices();
        a.len() == b.len()
            && self.weight.shape() == other.weight.shape()
            && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Orthogonal `rows × cols` matrix: orthonormal columns when tall,
/// orthonormal rows when wide. Gram-Schmidt on a Gaussian draw, which
/// matches QR with a positive-diagonal `R`.
pub(crate) fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut RngStream) -> Matrix {
    let (tall_r, tall_c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(tall_c);
    let mut raw = Matrix::zeros(tall_r, tall_c);
    for v in raw.data_mut() {
        *v = rng.standard_normal();
    }
    for j in 0..tall_c {
        let mut v = raw.column(j);
        // two passes of modified Gram-Schmidt for numerical orthogonality
        for _ in 0..2 {
            for q in &basis {
                let p: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        basis.push(v);
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, q) in basis.iter().enumerate() {
        for (i, &x) in q.iter().enumerate() {
            if rows >= cols {
                m.set(i, j, gain * x);
            } else {
                m.set(j, i, gain * x);
            }
        }
    }
    m
}
