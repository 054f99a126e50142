use serde::{Deserialize, Serialize};

use super::TaskSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioMode {
    Standard,
    LevelShift,
    TaskChain,
}

/// Maps the global step to the active task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSchedule {
    pub mode: ScenarioMode,
    pub segment_length: u64,
    pub segments: Vec<TaskSpec>,
}

impl ScenarioSchedule {
    pub fn standard(task: TaskSpec) -> Self {
        ScenarioSchedule { mode: ScenarioMode::Standard, segment_length: u64::MAX, segments: vec![task] }
    }

    /// `n_tasks` segments whose level seeds are `base + i·offset`.
    pub fn level_shift(base: TaskSpec, n_tasks: usize, segment_length: u64, offset: u64) -> Result<Self> {
        if n_tasks == 0 || segment_length == 0 {
            return Err(Error::Spec("level_shift needs n_tasks and segment_length >= 1".into()));
        }
        let segments = (0..n_tasks as u64)
            .map(|i| TaskSpec { level_seed: base.level_seed.wrapping_add(i.wrapping_mul(offset)), ..base.clone() })
            .collect();
        Ok(ScenarioSchedule { mode: ScenarioMode::LevelShift, segment_length, segments })
    }

    /// `n_tasks` segments cycling through `variants` in order.
    pub fn task_chain(base: TaskSpec, variants: &[String], n_tasks: usize, segment_length: u64) -> Result<Self> {
        if variants.is_empty() || n_tasks == 0 || segment_length == 0 {
            return Err(Error::Spec("task_chain needs variants, n_tasks and segment_length >= 1".into()));
        }
        let segments = (0..n_tasks)
            .map(|i| TaskSpec { variant: variants[i % variants.len()].clone(), ..base.clone() })
            .collect();
        Ok(ScenarioSchedule { mode: ScenarioMode::TaskChain, segment_length, segments })
    }

    pub fn segment_index(&self, step: u64) -> usize {
        ((step / self.segment_length) as usize).min(self.segments.len().saturating_sub(1))
    }

    /// Active task at `step` and whether `step` starts a segment.
    pub fn shift(&self, step: u64) -> Result<(&TaskSpec, bool)> {
        if self.segments.is_empty() {
            return Err(Error::Spec("schedule has no segments".into()));
        }
        let raw = step / self.segment_length;
        let switched = step.is_multiple_of(self.segment_length) && (raw as usize) < self.segments.len();
        Ok((&self.segments[self.segment_index(step)], switched))
    }

    /// Number of task switches after step 0 within `total_steps`.
    pub fn switches_within(&self, total_steps: u64) -> u64 {
        (1..self.segments.len() as u64)
            .filter(|i| i.saturating_mul(self.segment_length) < total_steps)
            .count() as u64
    }
}
