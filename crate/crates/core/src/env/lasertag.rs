//! Laser Tag: a pursuit grid world with eight noisy laser range readings.
//!
//! The robot knows its own cell; the opponent's cell is hidden. Each step
//! the opponent steps toward the robot along x (0.4), along y (0.4), or
//! stays (0.2). Cells are `[row, col]`; north decreases the row.

use crate::error::{IcvarError, Result};
use crate::model::{ActionSpace, GenerativeModel, SimRng, Transition};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::fmt;

pub type Cell = [usize; 2];

const DEFAULT_SPEC: &str = include_str!("../../configs/lasertag.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserTagSpec {
    pub rows: usize,
    pub cols: usize,
    pub walls: Vec<Cell>,
    pub robot_start: Cell,
    pub danger_areas: Vec<Cell>,
    pub danger_radius: f64,
    pub danger_penalty: f64,
    pub step_cost: f64,
    pub failed_tag_cost: f64,
    pub tag_reward: f64,
    /// Probability that a move is replaced by a uniformly random feasible move.
    pub transition_error: f64,
    pub opponent_move_x: f64,
    pub opponent_move_y: f64,
    pub laser_noise_std: f64,
    pub gamma: f64,
    pub max_steps: u32,
}

impl Default for LaserTagSpec {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SPEC).expect("embedded LaserTag spec parses")
    }
}

impl LaserTagSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(IcvarError::config("grid must be non-empty"));
        }
        let inside = |c: &Cell| c[0] < self.rows && c[1] < self.cols;
        if !self.walls.iter().all(inside) || !self.danger_areas.iter().all(inside) {
            return Err(IcvarError::config("wall or danger cell outside the grid"));
        }
        if !inside(&self.robot_start) || self.walls.contains(&self.robot_start) {
            return Err(IcvarError::config("robot start must be a free cell"));
        }
        if self.rows * self.cols - self.walls.len() < 2 {
            return Err(IcvarError::config("grid needs at least two free cells"));
        }
        let probs = [self.transition_error, self.opponent_move_x, self.opponent_move_y];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.opponent_move_x + self.opponent_move_y > 1.0 {
            return Err(IcvarError::config("LaserTag probabilities out of range"));
        }
        if !(self.laser_noise_std > 0.0) {
            return Err(IcvarError::config("laser noise must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || self.max_steps == 0 {
            return Err(IcvarError::config("gamma must lie in (0, 1] and max_steps >= 1"));
        }
        let costs = [self.danger_radius, self.danger_penalty, self.step_cost, self.failed_tag_cost, self.tag_reward];
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(IcvarError::config("LaserTag magnitudes must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LaserTagState {
    pub robot: Cell,
    pub opponent: Cell,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaserTagAction {
    North,
    South,
    East,
    West,
    Tag,
}

impl fmt::Display for LaserTagAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const MOVES: [LaserTagAction; 4] =
    [LaserTagAction::North, LaserTagAction::South, LaserTagAction::East, LaserTagAction::West];

/// Which way the opponent moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpponentMove {
    AlongX,
    AlongY,
    Stay,
}

/// Ray directions as `(d_row, d_col)`: N, NE, E, SE, S, SW, W, NW.
const RAYS: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

#[derive(Debug, Clone)]
pub struct LaserTag {
    spec: LaserTagSpec,
    free: Vec<bool>,
    free_cells: Vec<Cell>,
}

impl LaserTag {
    pub fn new(spec: LaserTagSpec) -> Result<Self> {
        spec.validate()?;
        let mut free = vec![true; spec.rows * spec.cols];
        for w in &spec.walls {
            free[w[0] * spec.cols + w[1]] = false;
        }
        let free_cells = (0..spec.rows)
            .flat_map(|r| (0..spec.cols).map(move |c| [r, c]))
            .filter(|c| free[c[0] * spec.cols + c[1]])
            .collect();
        Ok(Self { spec, free, free_cells })
    }

    pub fn spec(&self) -> &LaserTagSpec {
        &self.spec
    }

    pub fn is_free(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.spec.rows
            && (col as usize) < self.spec.cols
            && self.free[row as usize * self.spec.cols + col as usize]
    }

    fn shift(&self, cell: Cell, dr: isize, dc: isize) -> Option<Cell> {
        let (r, c) = (cell[0] as isize + dr, cell[1] as isize + dc);
        self.is_free(r, c).then_some([r as usize, c as usize])
    }

    fn delta(action: LaserTagAction) -> (isize, isize) {
        match action {
            LaserTagAction::North => (-1, 0),
            LaserTagAction::South => (1, 0),
            LaserTagAction::East => (0, 1),
            LaserTagAction::West => (0, -1),
            LaserTagAction::Tag => (0, 0),
        }
    }

    /// Robot cell after a move action, including the transition error.
    fn move_robot(&self, robot: Cell, action: LaserTagAction, rng: &mut SimRng) -> Cell {
        if action == LaserTagAction::Tag {
            return robot;
        }
        let action = if rng.random::<f64>() < self.spec.transition_error {
            let feasible: Vec<_> = MOVES.iter().filter(|m| {
                let (dr, dc) = Self::delta(**m);
                self.shift(robot, dr, dc).is_some()
            }).collect();
            if feasible.is_empty() {
                return robot;
            }
            *feasible[rng.random_range(0..feasible.len())]
        } else {
            action
        };
        let (dr, dc) = Self::delta(action);
        self.shift(robot, dr, dc).unwrap_or(robot)
    }

    /// Draws the opponent's move type.
    pub fn sample_opponent_move(&self, rng: &mut SimRng) -> OpponentMove {
        let u: f64 = rng.random();
        if u < self.spec.opponent_move_x {
            OpponentMove::AlongX
        } else if u < self.spec.opponent_move_x + self.spec.opponent_move_y {
            OpponentMove::AlongY
        } else {
            OpponentMove::Stay
        }
    }

    /// Opponent cell after moving toward `robot`; blocked moves stay put.
    pub fn apply_opponent_move(&self, opponent: Cell, robot: Cell, mv: OpponentMove) -> Cell {
        let toward = |from: usize, to: usize| (to as isize - from as isize).signum();
        let (dr, dc) = match mv {
            OpponentMove::AlongX => (0, toward(opponent[1], robot[1])),
            OpponentMove::AlongY => (toward(opponent[0], robot[0]), 0),
            OpponentMove::Stay => (0, 0),
        };
        self.shift(opponent, dr, dc).unwrap_or(opponent)
    }

    /// Noiseless ranges along the eight rays: Euclidean distance travelled
    /// before leaving the grid, entering a wall, or reaching the opponent.
    pub fn true_ranges(&self, state: &LaserTagState) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (k, (dr, dc)) in RAYS.iter().enumerate() {
            let unit = if *dr != 0 && *dc != 0 { SQRT_2 } else { 1.0 };
            let mut cell = state.robot;
            let mut steps = 0;
            while let Some(next) = self.shift(cell, *dr, *dc) {
                if next == state.opponent {
                    break;
                }
                cell = next;
                steps += 1;
            }
            out[k] = steps as f64 * unit;
        }
        out
    }

    pub fn in_danger(&self, cell: Cell) -> bool {
        self.spec.danger_areas.iter().any(|d| {
            let dr = d[0] as f64 - cell[0] as f64;
            let dc = d[1] as f64 - cell[1] as f64;
            (dr * dr + dc * dc).sqrt() <= self.spec.danger_radius
        })
    }

    /// Peak of the observation density (all residuals zero).
    pub fn obs_density_peak(&self) -> f64 {
        (2.0 * PI * self.spec.laser_noise_std.powi(2)).powf(-4.0)
    }

    /// Successor for a given opponent move; the robot cell must already be updated.
    fn successor(&self, s: &LaserTagState, action: LaserTagAction, robot: Cell, mv: OpponentMove) -> LaserTagState {
        if action == LaserTagAction::Tag && s.robot == s.opponent {
            return LaserTagState { robot: s.robot, opponent: s.opponent, terminal: true };
        }
        LaserTagState { robot, opponent: self.apply_opponent_move(s.opponent, robot, mv), terminal: false }
    }
}

impl GenerativeModel for LaserTag {
    type State = LaserTagState;
    type Action = LaserTagAction;
    type Observation = [f64; 8];

    fn step(&self, s: &LaserTagState, a: &LaserTagAction, rng: &mut SimRng) -> Transition<LaserTagState, [f64; 8]> {
        let next = if s.terminal {
            *s
        } else {
            let robot = self.move_robot(s.robot, *a, rng);
            let mv = self.sample_opponent_move(rng);
            self.successor(s, *a, robot, mv)
        };
        let noise = Normal::new(0.0, self.spec.laser_noise_std).expect("validated std");
        let mut observation = self.true_ranges(&next);
        observation.iter_mut().for_each(|z| *z += noise.sample(rng));
        Transition { next_state: next, observation, cost: self.cost(s, a, &next) }
    }

    fn cost(&self, s: &LaserTagState, a: &LaserTagAction, next: &LaserTagState) -> f64 {
        if s.terminal {
            return 0.0;
        }
        if next.terminal {
            return -self.spec.tag_reward;
        }
        let base = if *a == LaserTagAction::Tag { self.spec.failed_tag_cost } else { self.spec.step_cost };
        let danger = if self.in_danger(next.robot) { self.spec.danger_penalty } else { 0.0 };
        base + danger
    }

    fn obs_density(&self, z: &[f64; 8], _a: &LaserTagAction, next: &LaserTagState) -> f64 {
        let ranges = self.true_ranges(next);
        let var = self.spec.laser_noise_std.powi(2);
        let sq: f64 = z.iter().zip(&ranges).map(|(z, r)| (z - r).powi(2)).sum();
        self.obs_density_peak() * (-0.5 * sq / var).exp()
    }

    fn sample_initial_state(&self, rng: &mut SimRng) -> LaserTagState {
        let robot = self.spec.robot_start;
        let opponent = loop {
            let c = self.free_cells[rng.random_range(0..self.free_cells.len())];
            if c != robot {
                break c;
            }
        };
        LaserTagState { robot, opponent, terminal: false }
    }

    fn actions(&self) -> ActionSpace<LaserTagAction> {
        let mut all = MOVES.to_vec();
        all.push(LaserTagAction::Tag);
        ActionSpace::Finite(all)
    }

    fn cost_range(&self) -> (f64, f64) {
        let worst = self.spec.step_cost.max(self.spec.failed_tag_cost) + self.spec.danger_penalty;
        (-self.spec.tag_reward, worst)
    }

    fn discount(&self) -> f64 {
        self.spec.gamma
    }

    fn is_terminal(&self, s: &LaserTagState) -> bool {
        s.terminal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::substream;

    fn model() -> LaserTag {
        LaserTag::new(LaserTagSpec::default()).unwrap()
    }

    #[test]
    fn default_spec_is_valid() {
        let m = model();
        assert_eq!(m.spec().rows, 7);
        assert_eq!(m.spec().cols, 11);
        assert_eq!(m.spec().danger_areas.len(), 7);
        assert_eq!(m.cost_range(), (-200.0, 15.0));
    }

    #[test]
    fn malformed_grid_rejected() {
        let mut spec = LaserTagSpec::default();
        spec.walls.push([7, 0]);
        assert!(LaserTag::new(spec).is_err());
        let mut spec = LaserTagSpec::default();
        spec.walls.push(spec.robot_start);
        assert!(LaserTag::new(spec).is_err());
    }

    #[test]
    fn successful_tag_is_terminal_with_tag_reward() {
        let m = model();
        let s = LaserTagState { robot: [2, 4], opponent: [2, 4], terminal: false };
        let mut rng = substream(1, 0);
        let t = m.step(&s, &LaserTagAction::Tag, &mut rng);
        assert!(t.next_state.terminal);
        assert_eq!(t.cost, -200.0);
        let again = m.step(&t.next_state, &LaserTagAction::North, &mut rng);
        assert_eq!(again.next_state, t.next_state);
        assert_eq!(again.cost, 0.0);
    }

    #[test]
    fn failed_tag_costs() {
        let m = model();
        let s = LaserTagState { robot: [2, 4], opponent: [6, 0], terminal: false };
        let t = m.step(&s, &LaserTagAction::Tag, &mut substream(2, 0));
        assert!(!t.next_state.terminal);
        let expected = 10.0 + if m.in_danger([2, 4]) { 5.0 } else { 0.0 };
        assert_eq!(t.cost, expected);
    }

    #[test]
    fn density_peak_at_noiseless_ranges() {
        let m = model();
        let s = LaserTagState { robot: [0, 0], opponent: [3, 7], terminal: false };
        let z = m.true_ranges(&s);
        let peak = m.obs_density(&z, &LaserTagAction::Tag, &s);
        assert_eq!(peak, (2.0 * PI).powi(-4));
        let mut off = z;
        off[3] += 0.5;
        assert!(m.obs_density(&off, &LaserTagAction::Tag, &s) < peak);
    }

    #[test]
    fn ranges_stop_at_walls_and_opponent() {
        let m = model();
        // robot at the top-left corner: N and W rays are blocked immediately
        let s = LaserTagState { robot: [0, 0], opponent: [0, 3], terminal: false };
        let r = m.true_ranges(&s);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[6], 0.0);
        assert_eq!(r[2], 2.0);
    }

    #[test]
    fn opponent_moves_toward_robot() {
        let m = model();
        assert_eq!(m.apply_opponent_move([6, 10], [0, 0], OpponentMove::AlongX), [6, 9]);
        assert_eq!(m.apply_opponent_move([6, 10], [0, 0], OpponentMove::AlongY), [5, 10]);
        assert_eq!(m.apply_opponent_move([6, 10], [0, 0], OpponentMove::Stay), [6, 10]);
        // [4, 8] is a wall: moving east from [4, 7] is blocked
        assert_eq!(m.apply_opponent_move([4, 7], [4, 10], OpponentMove::AlongX), [4, 7]);
    }

    #[test]
    fn moves_never_enter_walls() {
        let m = model();
        let mut rng = substream(3, 0);
        let mut s = m.sample_initial_state(&mut rng);
        for i in 0..2000 {
            let a = MOVES[i % 4];
            s = m.step(&s, &a, &mut rng).next_state;
            assert!(m.is_free(s.robot[0] as isize, s.robot[1] as isize));
            assert!(m.is_free(s.opponent[0] as isize, s.opponent[1] as isize));
        }
    }
}
