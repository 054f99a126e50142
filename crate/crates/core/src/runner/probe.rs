//! Probe batches for metric logging. A probe is a pure function of its
//! spec, so checkpoints can carry the spec and rebuild the exact batch.

use serde::{Deserialize, Serialize};

use crate::envs::{Env, FrameStack, TaskSpec};
use crate::error::Result;
use crate::learners::ActionSpace;
use crate::numkit::{Matrix, RngStream};

/// Stream id base for probe draws; the segment index is added on top.
pub const PROBE_STREAM: u64 = 4 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSpec {
    /// Observations from a uniformly random policy on one task.
    Rollout {
        seed: u64,
        segment: usize,
        task: TaskSpec,
        grid_size: usize,
        frame_stack: usize,
        n: usize,
    },
    /// Standard-normal regression inputs.
    Inputs { seed: u64, n: usize, input_dim: usize },
}

impl ProbeSpec {
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            ProbeSpec::Rollout { seed, .. } | ProbeSpec::Inputs { seed, .. } => *seed = new_seed,
        }
        self
    }

    pub fn build(&self) -> Result<Matrix> {
        match self {
            ProbeSpec::Rollout { seed, segment, task, grid_size, frame_stack, n } => {
                let mut rng = RngStream::new(*seed, PROBE_STREAM + *segment as u64);
                let mut env = Env::make(task, *grid_size, rng.sibling(PROBE_STREAM | 1 << 31 | *segment as u64))?;
                let space = env.action_space();
                let mut fs = FrameStack::new(*frame_stack);
                let mut obs = fs.reset(&env.reset());
                let mut rows = Vec::with_capacity(n * obs.len());
                for _ in 0..*n {
                    rows.extend_from_slice(&obs);
                    let action = match space {
                        ActionSpace::Discrete(k) => vec![rng.below(k) as f64],
                        ActionSpace::Continuous(d) => (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                    };
                    let tr = env.step(&action)?;
                    obs = if tr.done() { fs.reset(&env.reset()) } else { fs.push(&tr.obs) };
                }
                Matrix::from_vec(*n, rows.len() / n.max(&1), rows)
            }
            ProbeSpec::Inputs { seed, n, input_dim } => {
                let mut rng = RngStream::new(*seed, PROBE_STREAM);
                let data = (0..n * input_dim).map(|_| rng.standard_normal()).collect();
                Matrix::from_vec(*n, *input_dim, data)
            }
        }
    }
}
