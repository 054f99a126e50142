//! Procedurally generated gridworld with walls, hazards and a goal.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numkit::RngStream;

pub const GRID_ACTIONS: usize = 5;
pub const GRID_CHANNELS: usize = 4;
pub const STEP_COST: f64 = -0.01;
pub const GOAL_REWARD: f64 = 1.0;
pub const HAZARD_REWARD: f64 = -1.0;

const WALL_DENSITY: f64 = 0.18;
const HAZARDS: usize = 2;
/// Stream id for layout draws; layouts depend on the level seed only.
const LAYOUT_STREAM: u64 = 0x6c61_796f_7574;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
    Hazard,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    pub size: usize,
    /// Row-major, `size × size`.
    pub cells: Vec<Cell>,
    pub agent: (usize, usize),
    pub goal: (usize, usize),
}

impl std::hash::Hash for Cell {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        (*self as u8).hash(state);
    }
}

impl Layout {
    /// Draws a layout for `level_seed`, resampling until the goal is
    /// reachable from the agent without crossing walls or hazards.
    pub fn generate(size: usize, level_seed: u64) -> Result<Layout> {
        if size < 4 {
            return Err(Error::Spec(format!("gridworld size must be >= 4, got {size}")));
        }
        let mut rng = RngStream::new(level_seed, LAYOUT_STREAM);
        loop {
            let layout = Layout::draw(size, &mut rng);
            if layout.solvable() {
                return Ok(layout);
            }
        }
    }

    fn draw(size: usize, rng: &mut RngStream) -> Layout {
        let mut cells = vec![Cell::Floor; size * size];
        let mut interior = Vec::new();
        for r in 0..size {
            for c in 0..size {
                if r == 0 || c == 0 || r == size - 1 || c == size - 1 {
                    cells[r * size + c] = Cell::Wall;
                } else {
                    interior.push((r, c));
                }
            }
        }
        for &(r, c) in &interior {
            if rng.uniform01() < WALL_DENSITY {
                cells[r * size + c] = Cell::Wall;
            }
        }
        let mut free: Vec<(usize, usize)> =
            interior.iter().copied().filter(|&(r, c)| cells[r * size + c] == Cell::Floor).collect();
        rng.shuffle(&mut free);
        // a nearly walled-in grid falls through to the solvability check
        let agent = free.first().copied().unwrap_or((1, 1));
        let goal = free.get(1).copied().unwrap_or((1, 1));
        for &(r, c) in free.iter().skip(2).take(HAZARDS) {
            cells[r * size + c] = Cell::Hazard;
        }
        Layout { size, cells, agent, goal }
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.size + c]
    }

    /// Breadth-first shortest path length from agent to goal over safe
    /// cells, if any.
    pub fn shortest_path(&self) -> Option<usize> {
        if self.agent == self.goal {
            return None;
        }
        let n = self.size;
        let mut dist = vec![usize::MAX; n * n];
        let mut queue = VecDeque::new();
        dist[self.agent.0 * n + self.agent.1] = 0;
        queue.push_back(self.agent);
        while let Some((r, c)) = queue.pop_front() {
            let d = dist[r * n + c];
            if (r, c) == self.goal {
                return Some(d);
            }
            for (nr, nc) in [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)] {
                if self.cell(nr, nc) == Cell::Floor && dist[nr * n + nc] == usize::MAX {
                    dist[nr * n + nc] = d + 1;
                    queue.push_back((nr, nc));
                }
            }
        }
        None
    }

    pub fn solvable(&self) -> bool {
        self.shortest_path().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gridworld {
    layout: Layout,
    pos: (usize, usize),
    t: u64,
    horizon: u64,
}

impl Gridworld {
    pub fn new(size: usize, level_seed: u64, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Spec("horizon must be >= 1".into()));
        }
        let layout = Layout::generate(size, level_seed)?;
        Ok(Gridworld { pos: layout.agent, layout, t: 0, horizon })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn obs_dim(&self) -> usize {
        GRID_CHANNELS * self.layout.size * self.layout.size
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.pos = self.layout.agent;
        self.t = 0;
        self.observe()
    }

    /// One-hot channels (agent, goal, hazard, wall), channel-major.
    pub fn observe(&self) -> Vec<f64> {
        let n = self.layout.size;
        let plane = n * n;
        let mut obs = vec![0.0; GRID_CHANNELS * plane];
        obs[self.pos.0 * n + self.pos.1] = 1.0;
        obs[plane + self.layout.goal.0 * n + self.layout.goal.1] = 1.0;
        for (i, cell) in self.layout.cells.iter().enumerate() {
            match cell {
                Cell::Hazard => obs[2 * plane + i] = 1.0,
                Cell::Wall => obs[3 * plane + i] = 1.0,
                Cell::Floor => {}
            }
        }
        obs
    }

    /// Actions: 0 up, 1 down, 2 left, 3 right, 4 stay. Returns
    /// `(obs, reward, terminated, truncated)`.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool, bool)> {
        let (r, c) = self.pos;
        let target = match action {
            0 => (r - 1, c),
            1 => (r + 1, c),
            2 => (r, c - 1),
            3 => (r, c + 1),
            4 => (r, c),
            _ => return Err(Error::invalid(format!("gridworld action {action} not in 0..5"))),
        };
        if self.layout.cell(target.0, target.1) != Cell::Wall {
            self.pos = target;
        }
        self.t += 1;
        let (reward, terminated) = if self.pos == self.layout.goal {
            (GOAL_REWARD, true)
        } else if self.layout.cell(self.pos.0, self.pos.1) == Cell::Hazard {
            (HAZARD_REWARD, true)
        } else {
            (STEP_COST, false)
        };
        let truncated = !terminated && self.t >= self.horizon;
        Ok((self.observe(), reward, terminated, truncated))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_layout() {
        assert_eq!(Layout::generate(9, 42).unwrap(), Layout::generate(9, 42).unwrap());
    }

    #[test]
    fn stay_until_truncation() {
        let mut g = Gridworld::new(9, 3, 10).unwrap();
        g.reset();
        let mut total = 0.0;
        for i in 0..10 {
            let (_, r, term, trunc) = g.step(4).unwrap();
            total += r;
            assert!(!term);
            assert_eq!(trunc, i == 9);
        }
        assert!((total + 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_action() {
        let mut g = Gridworld::new(9, 3, 10).unwrap();
        assert!(g.step(5).is_err());
    }
}
