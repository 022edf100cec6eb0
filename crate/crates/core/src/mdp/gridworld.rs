use std::collections::VecDeque;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::FiniteMdp;
use crate::error::{Error, Result};

/// Action order of every gridworld MDP.
pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    Goal,
}

/// Rectangular grid plus its reward scheme. Cells outside the grid behave as walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layout: Vec<Vec<Cell>>,
    /// Reward for an ordinary move.
    pub step_reward: f64,
    /// Reward for bumping into a wall (the agent stays put).
    pub wall_reward: f64,
    /// Reward for any transition that lands on a goal cell.
    pub goal_reward: f64,
    pub gamma: f64,
}

impl GridSpec {
    /// Parses `#` (wall), `.` (floor) and `G` (goal), one row per line. Blank lines are skipped.
    pub fn parse_layout(text: &str) -> Result<Vec<Vec<Cell>>> {
        let rows: Vec<Vec<Cell>> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(r, line)| {
                line.chars()
                    .enumerate()
                    .map(|(c, ch)| match ch {
                        '#' => Ok(Cell::Wall),
                        '.' | ' ' => Ok(Cell::Floor),
                        'G' => Ok(Cell::Goal),
                        other => Err(Error::GridLayout(format!(
                            "unknown cell {other:?} at row {r}, column {c}"
                        ))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if rows.iter().any(|r| r.len() != first.len()) {
                return Err(Error::GridLayout("rows have different lengths".into()));
            }
        }
        Ok(rows)
    }

    /// Layout with the reward scheme of the four-rooms study: +1 for entering a goal,
    /// -1 for running into a wall, 0 otherwise.
    pub fn from_text(text: &str, gamma: f64) -> Result<Self> {
        Ok(Self {
            layout: Self::parse_layout(text)?,
            step_reward: 0.0,
            wall_reward: -1.0,
            goal_reward: 1.0,
            gamma,
        })
    }
}

/// A gridworld MDP with its cell/state correspondence.
#[derive(Debug, Clone)]
pub struct Gridworld {
    pub mdp: FiniteMdp,
    /// `(row, col)` of each state.
    pub cells: Vec<(usize, usize)>,
    /// State index of each open cell, `None` for walls.
    pub state_of: Vec<Vec<Option<usize>>>,
    /// Non-fatal diagnostics such as unreachable goals.
    pub warnings: Vec<String>,
}

impl Gridworld {
    pub fn rows(&self) -> usize {
        self.state_of.len()
    }

    pub fn cols(&self) -> usize {
        self.state_of.first().map_or(0, Vec::len)
    }

    /// Lays out a per-state vector on the grid, walls become `None`.
    pub fn to_grid<T: Copy>(&self, values: &[T]) -> Vec<Vec<Option<T>>> {
        self.state_of
            .iter()
            .map(|row| row.iter().map(|s| s.map(|s| values[s])).collect())
            .collect()
    }
}

/// Deterministic 4-action gridworld. A blocked move leaves the agent in place; the goal is
/// not absorbing.
pub fn build_gridworld(spec: &GridSpec) -> Result<Gridworld> {
    let rows = spec.layout.len();
    let cols = spec.layout.first().map_or(0, Vec::len);
    if spec.layout.iter().any(|r| r.len() != cols) {
        return Err(Error::GridLayout("rows have different lengths".into()));
    }
    let mut state_of = vec![vec![None; cols]; rows];
    let mut cells = Vec::new();
    for (r, row) in spec.layout.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if *cell != Cell::Wall {
                state_of[r][c] = Some(cells.len());
                cells.push((r, c));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let ns = cells.len();
    let step = |r: usize, c: usize, (dr, dc): (isize, isize)| -> Option<usize> {
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        state_of.get(nr)?.get(nc).copied().flatten()
    };

    let mut rewards = Array2::zeros((ns, 4));
    let mut transitions = Array3::zeros((ns, 4, ns));
    for (s, &(r, c)) in cells.iter().enumerate() {
        for (a, &mv) in MOVES.iter().enumerate() {
            let (next, blocked) = match step(r, c, mv) {
                Some(t) => (t, false),
                None => (s, true),
            };
            let (nr, nc) = cells[next];
            rewards[[s, a]] = if spec.layout[nr][nc] == Cell::Goal {
                spec.goal_reward
            } else if blocked {
                spec.wall_reward
            } else {
                spec.step_reward
            };
            transitions[[s, a, next]] = 1.0;
        }
    }

    let mut warnings = Vec::new();
    let mut seen = vec![false; ns];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(s) = queue.pop_front() {
        let (r, c) = cells[s];
        for &mv in &MOVES {
            if let Some(t) = step(r, c, mv) {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    for (s, &(r, c)) in cells.iter().enumerate() {
        if spec.layout[r][c] == Cell::Goal && !seen[s] {
            warnings.push(format!("goal at row {r}, column {c} is unreachable from the first open cell"));
        }
    }

    let mdp = FiniteMdp::new(rewards, transitions, spec.gamma)?;
    Ok(Gridworld { mdp, cells, state_of, warnings })
}
