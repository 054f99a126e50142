//! Supervised plasticity probe: regression onto a frozen random teacher
//! whose input is permuted; a new permutation is a new task.

use crate::error::{Error, Result};
use crate::net::{mlp_specs, Activation, MlpShape, NetworkState};
use crate::numkit::{Matrix, RngStream};

const PERM_STREAM: u64 = 0x7065_726d;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTask {
    pub teacher: NetworkState,
    pub input_dim: usize,
}

impl ProbeTask {
    /// Teacher `input → hidden (tanh) → output` drawn from `teacher_seed`.
    pub fn new(teacher_seed: u64, input_dim: usize, hidden: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return Err(Error::Spec("probe dimensions must be >= 1".into()));
        }
        let specs = mlp_specs(&MlpShape {
            input: input_dim,
            hidden: &[hidden],
            output: output_dim,
            activation: Activation::Tanh,
            layer_norm: false,
            hidden_gain: 2.0,
            head_gain: 1.0,
        });
        let teacher = NetworkState::new(specs, &mut RngStream::new(teacher_seed, 0))?;
        Ok(ProbeTask { teacher, input_dim })
    }

    pub fn output_dim(&self) -> usize {
        self.teacher.output_dim()
    }

    /// Input permutation of task `perm_seed`. Seed 0 is the identity.
    pub fn permutation(&self, perm_seed: u64) -> Vec<usize> {
        let mut p: Vec<usize> = (0..self.input_dim).collect();
        if perm_seed != 0 {
            RngStream::new(perm_seed, PERM_STREAM).shuffle(&mut p);
        }
        p
    }

    /// Teacher outputs on permuted inputs: `y = teacher(x[:, perm])`.
    pub fn targets(&self, perm: &[usize], x: &Matrix) -> Result<Matrix> {
        if perm.len() != self.input_dim || x.cols() != self.input_dim {
            return Err(Error::invalid("probe permutation or input width mismatch"));
        }
        let mut px = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let (src, dst) = (x.row(r), px.row_mut(r));
            for (d, &p) in dst.iter_mut().zip(perm) {
                *d = src[p];
            }
        }
        self.teacher.predict(&px)
    }

    /// Standard-normal inputs drawn from `rng` with their targets.
    pub fn batch(&self, perm_seed: u64, n: usize, rng: &mut RngStream) -> Result<(Matrix, Matrix)> {
        if n == 0 {
            return Err(Error::invalid("probe batch size must be >= 1"));
        }
        let data = (0..n * self.input_dim).map(|_| rng.standard_normal()).collect();
        let x = Matrix::from_vec(n, self.input_dim, data)?;
        let y = self.targets(&self.permutation(perm_seed), &x)?;
        Ok((x, y))
    }
}

/// Mean squared error over all entries.
pub fn mse(pred: &Matrix, target: &Matrix) -> f64 {
    let n = pred.data().len().max(1) as f64;
    pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}
