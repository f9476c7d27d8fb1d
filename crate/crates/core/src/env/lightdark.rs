//! Continuous 2-D Light-Dark navigation.
//!
//! The agent moves by a unit-length (or shorter) action plus Gaussian
//! noise and observes its own position through Gaussian noise whose
//! variance grows with the distance to the nearest light beacon. Reaching
//! the goal disc, hitting an obstacle disc, or leaving the square ends the
//! episode.

use crate::error::{IcvarError, Result};
use crate::model::{ActionSpace, GenerativeModel, SimRng, Transition};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec2 = [f64; 2];

const DEFAULT_SPEC: &str = include_str!("../../configs/lightdark.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightDarkSpec {
    /// Side length of the square `[0, size]^2`.
    pub size: f64,
    pub start: Vec2,
    /// Standard deviation of the initial position around `start`.
    pub start_std: f64,
    pub goal: Vec2,
    pub goal_radius: f64,
    pub goal_reward: f64,
    pub obstacles: Vec<Vec2>,
    pub obstacle_radius: f64,
    pub obstacle_penalty: f64,
    pub boundary_penalty: f64,
    pub fuel_cost: f64,
    pub beacons: Vec<Vec2>,
    pub beacon_radius: f64,
    /// Per-axis variance of the transition noise.
    pub transition_var: f64,
    /// Per-axis observation variance inside a beacon disc.
    pub observation_var: f64,
    pub gamma: f64,
    pub max_steps: u32,
}

impl Default for LightDarkSpec {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SPEC).expect("embedded LightDark spec parses")
    }
}

fn dist(a: &Vec2, b: &Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl LightDarkSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec2| v.iter().all(|x| x.is_finite());
        if !(self.size > 0.0) || !finite(&self.start) || !finite(&self.goal) {
            return Err(IcvarError::config("size must be positive and positions finite"));
        }
        if self.beacons.is_empty() || !self.beacons.iter().all(finite) || !self.obstacles.iter().all(finite) {
            return Err(IcvarError::config("need at least one beacon and finite obstacle positions"));
        }
        let positive = [self.goal_radius, self.beacon_radius, self.transition_var, self.observation_var];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(IcvarError::config("radii and variances must be positive"));
        }
        let magnitudes = [
            self.start_std,
            self.obstacle_radius,
            self.goal_reward,
            self.obstacle_penalty,
            self.boundary_penalty,
            self.fuel_cost,
        ];
        if magnitudes.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(IcvarError::config("magnitudes must be finite and non-negative"));
        }
        if self.obstacles.iter().any(|o| dist(o, &self.goal) < self.goal_radius + self.obstacle_radius) {
            return Err(IcvarError::config("obstacles must not overlap the goal"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || self.max_steps == 0 {
            return Err(IcvarError::config("gamma must lie in (0, 1] and max_steps >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightDarkState {
    pub position: Vec2,
}

/// Why a position ends the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Free,
    Goal,
    Obstacle,
    Outside,
}

#[derive(Debug, Clone)]
pub struct LightDark {
    spec: LightDarkSpec,
}

impl LightDark {
    pub fn new(spec: LightDarkSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &LightDarkSpec {
        &self.spec
    }

    pub fn region(&self, p: &Vec2) -> Region {
        let s = &self.spec;
        if !(0.0..=s.size).contains(&p[0]) || !(0.0..=s.size).contains(&p[1]) {
            Region::Outside
        } else if dist(p, &s.goal) <= s.goal_radius {
            Region::Goal
        } else if s.obstacles.iter().any(|o| dist(p, o) <= s.obstacle_radius) {
            Region::Obstacle
        } else {
            Region::Free
        }
    }

    /// Per-axis observation variance at `p`: the base variance inside a
    /// beacon disc, scaled by `(1 + d)^2` at distance `d` outside the
    /// nearest disc.
    pub fn observation_var(&self, p: &Vec2) -> f64 {
        let d = self
            .spec
            .beacons
            .iter()
            .map(|b| (dist(p, b) - self.spec.beacon_radius).max(0.0))
            .fold(f64::INFINITY, f64::min);
        self.spec.observation_var * (1.0 + d).powi(2)
    }

    fn gaussian(&self, rng: &mut SimRng, var: f64) -> Vec2 {
        let sd = var.sqrt();
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        [x * sd, y * sd]
    }

    fn observe(&self, p: &Vec2, rng: &mut SimRng) -> Vec2 {
        let n = self.gaussian(rng, self.observation_var(p));
        [p[0] + n[0], p[1] + n[1]]
    }
}

impl GenerativeModel for LightDark {
    type State = LightDarkState;
    type Action = Vec2;
    type Observation = Vec2;

    fn step(&self, s: &LightDarkState, a: &Vec2, rng: &mut SimRng) -> Transition<LightDarkState, Vec2> {
        let next = if self.is_terminal(s) {
            *s
        } else {
            let n = self.gaussian(rng, self.spec.transition_var);
            LightDarkState { position: [s.position[0] + a[0] + n[0], s.position[1] + a[1] + n[1]] }
        };
        let observation = self.observe(&next.position, rng);
        Transition { next_state: next, observation, cost: self.cost(s, a, &next) }
    }

    fn cost(&self, s: &LightDarkState, _a: &Vec2, next: &LightDarkState) -> f64 {
        if self.is_terminal(s) {
            return 0.0;
        }
        let sp = &self.spec;
        sp.fuel_cost
            + match self.region(&next.position) {
                Region::Free => 0.0,
                Region::Goal => -sp.goal_reward,
                Region::Obstacle => sp.obstacle_penalty,
                Region::Outside => sp.boundary_penalty,
            }
    }

    fn obs_density(&self, z: &Vec2, _a: &Vec2, next: &LightDarkState) -> f64 {
        let var = self.observation_var(&next.position);
        let sq = (z[0] - next.position[0]).powi(2) + (z[1] - next.position[1]).powi(2);
        (-0.5 * sq / var).exp() / (2.0 * PI * var)
    }

    /// Gaussian around the start, redrawn until it lands in free space.
    fn sample_initial_state(&self, rng: &mut SimRng) -> LightDarkState {
        let sp = &self.spec;
        for _ in 0..1000 {
            let n = self.gaussian(rng, sp.start_std * sp.start_std);
            let p = [sp.start[0] + n[0], sp.start[1] + n[1]];
            if self.region(&p) == Region::Free {
                return LightDarkState { position: p };
            }
        }
        LightDarkState { position: sp.start }
    }

    fn actions(&self) -> ActionSpace<Vec2> {
        ActionSpace::Sampled
    }

    /// A unit vector: a cardinal direction with probability 0.5, otherwise
    /// a uniformly random angle.
    fn sample_action(&self, rng: &mut SimRng) -> Vec2 {
        if rng.random::<f64>() < 0.5 {
            [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]][rng.random_range(0..4)]
        } else {
            let theta = rng.random::<f64>() * 2.0 * PI;
            [theta.cos(), theta.sin()]
        }
    }

    fn cost_range(&self) -> (f64, f64) {
        let sp = &self.spec;
        (sp.fuel_cost - sp.goal_reward, sp.fuel_cost + sp.obstacle_penalty.max(sp.boundary_penalty))
    }

    fn discount(&self) -> f64 {
        self.spec.gamma
    }

    fn is_terminal(&self, s: &LightDarkState) -> bool {
        self.region(&s.position) != Region::Free
    }
}
