//! Online tree search for ICVaR: ICVaR-PFT-DPW (belief trajectories) and
//! ICVaR-POMCPOW (state trajectories).
//!
//! Neither planner uses rollouts. Every simulation walks root to leaf and
//! each action node on the path recomputes its value from scratch as its
//! immediate cost plus the discounted empirical CVaR of its children's
//! values. Unexpanded leaves are worth 0.

mod pft_dpw;
mod pomcpow;

pub use pft_dpw::{BeliefEdge, BeliefNode, PftActionNode, PftDpw, PftDpwTree};
pub use pomcpow::{HistoryNode, ObservationChild, Pomcpow, PomcpowActionNode, PomcpowTree};

use crate::bounds::exploration_bonus;
use crate::cvar::{cvar_of_counts, cvar_of_slice, RiskLevel};
use crate::error::{IcvarError, Result};
use crate::model::{ActionSpace, GenerativeModel, SimRng};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// How long a single `plan` call may search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(u64),
    Seconds(f64),
}

impl Budget {
    pub fn is_wall_clock(&self) -> bool {
        matches!(self, Budget::Seconds(_))
    }
}

/// How an action node aggregates its children's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backup {
    /// Empirical CVaR at the configured risk level.
    #[default]
    Icvar,
    /// Plain mean, the risk-neutral reference.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub k_a: f64,
    pub alpha_a: f64,
    pub k_o: f64,
    pub alpha_o: f64,
    pub d_max: u32,
    pub alpha: RiskLevel,
    pub delta: f64,
    pub c_explore: f64,
    pub budget: Budget,
    pub gamma: f64,
    #[serde(default)]
    pub backup: Backup,
}

impl MctsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_a > 0.0 && self.k_o > 0.0) {
            return Err(IcvarError::config("widening constants k_a, k_o must be positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha_a) || !(0.0..=1.0).contains(&self.alpha_o) {
            return Err(IcvarError::config("widening exponents must lie in [0, 1]"));
        }
        if self.d_max == 0 {
            return Err(IcvarError::config("d_max must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(IcvarError::config("delta must lie in (0, 1]"));
        }
        if !(self.c_explore >= 0.0) {
            return Err(IcvarError::config("exploration constant must be >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(IcvarError::config("gamma must lie in (0, 1]"));
        }
        match self.budget {
            Budget::Iterations(0) => Err(IcvarError::config("iteration budget must be positive")),
            Budget::Seconds(s) if !(s > 0.0) => Err(IcvarError::config("time budget must be positive")),
            _ => Ok(()),
        }
    }

    pub(crate) fn aggregate(&self, values: &[f64]) -> f64 {
        match self.backup {
            Backup::Icvar => cvar_of_slice(values, self.alpha),
            Backup::Mean if values.is_empty() => 0.0,
            Backup::Mean => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// [`Self::aggregate`] over a multiset given as values with counts.
    pub(crate) fn aggregate_counts(&self, values: &[f64], counts: &[u64]) -> f64 {
        match self.backup {
            Backup::Icvar => cvar_of_counts(values, counts, self.alpha),
            Backup::Mean => {
                let n: u64 = counts.iter().sum();
                if n == 0 {
                    return 0.0;
                }
                let total: f64 = values.iter().zip(counts).map(|(v, &c)| v * c as f64).sum();
                total / n as f64
            }
        }
    }
}

/// Result of one `plan` call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome<A> {
    pub action: A,
    pub simulations: u64,
    /// `(action, value, visits)` of every root action child.
    pub root_values: Vec<(A, f64, u64)>,
    /// No simulation completed; `action` is a fallback.
    pub no_simulations: bool,
    /// Particle-filter steps whose weights collapsed and were reset.
    pub weight_collapses: u64,
}

/// Visit count and value of one action child, as seen by the selection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChildStats {
    pub visits: u64,
    pub value: f64,
}

/// Progressive-widening test `|C| <= k * N^beta`.
pub fn should_widen(n_children: usize, visits: u64, k: f64, beta: f64) -> bool {
    n_children as f64 <= k * (visits as f64).powf(beta)
}

/// Action progressive widening: returns the new action to add as a child,
/// if the widening test passes and the action space is not exhausted.
/// Finite spaces are widened in index order; sampled spaces draw a fresh
/// action.
pub fn icvar_action_prog_widen<M: GenerativeModel>(
    model: &M,
    cfg: &MctsConfig,
    n_children: usize,
    visits: u64,
    rng: &mut SimRng,
) -> Option<M::Action> {
    if !should_widen(n_children, visits, cfg.k_a, cfg.alpha_a) {
        return None;
    }
    match model.actions() {
        ActionSpace::Finite(actions) => actions.get(n_children).cloned(),
        ActionSpace::Sampled => Some(model.sample_action(rng)),
    }
}

/// Selection rule: the first never-visited child if any, otherwise the
/// minimizer of `value - bonus` (lowest index on ties).
pub fn icvar_exploration(children: &[ChildStats], parent_visits: u64, remaining: u32, cfg: &MctsConfig) -> Option<usize> {
    if let Some(i) = children.iter().position(|c| c.visits == 0) {
        return Some(i);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in children.iter().enumerate() {
        let bonus = exploration_bonus(parent_visits, c.visits, remaining.max(1), cfg.alpha, cfg.delta, cfg.c_explore)
            .unwrap_or(0.0);
        let score = c.value - bonus;
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) struct Deadline {
    start: Instant,
    budget: Budget,
}

impl Deadline {
    pub(crate) fn new(budget: Budget) -> Self {
        Self { start: Instant::now(), budget }
    }

    pub(crate) fn exhausted(&self, done: u64) -> bool {
        match self.budget {
            Budget::Iterations(n) => done >= n,
            Budget::Seconds(s) => self.start.elapsed() >= Duration::from_secs_f64(s),
        }
    }
}

/// Fallback action when nothing was searched.
pub(crate) fn default_action<M: GenerativeModel>(model: &M, rng: &mut SimRng) -> Result<M::Action> {
    match model.actions() {
        ActionSpace::Finite(a) => a.first().cloned().ok_or_else(|| IcvarError::domain("empty action set")),
        ActionSpace::Sampled => Ok(model.sample_action(rng)),
    }
}

pub(crate) fn check_action_space<M: GenerativeModel>(model: &M) -> Result<()> {
    match model.actions() {
        ActionSpace::Finite(a) if a.is_empty() => Err(IcvarError::domain("empty action set")),
        _ => Ok(()),
    }
}

/// Index of the smallest value among visited entries (lowest index on ties).
pub(crate) fn argmin_visited(entries: impl Iterator<Item = (f64, u64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (v, n)) in entries.enumerate() {
        if n > 0 && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn config(alpha: f64) -> MctsConfig {
        MctsConfig {
            k_a: 5.0,
            alpha_a: 0.0,
            k_o: 5.0,
            alpha_o: 0.5,
            d_max: 4,
            alpha: RiskLevel::new(alpha).unwrap(),
            delta: 0.05,
            c_explore: 1.0,
            budget: Budget::Iterations(100),
            gamma: 1.0,
            backup: Backup::Icvar,
        }
    }

    #[test]
    fn unvisited_child_is_forced() {
        let cfg = config(0.5);
        let kids = [
            ChildStats { visits: 3, value: -100.0 },
            ChildStats { visits: 0, value: 0.0 },
            ChildStats { visits: 0, value: 0.0 },
        ];
        assert_eq!(icvar_exploration(&kids, 3, 2, &cfg), Some(1));
    }

    #[test]
    fn equal_values_prefer_least_visited() {
        let cfg = config(0.5);
        let kids = [ChildStats { visits: 9, value: 1.0 }, ChildStats { visits: 2, value: 1.0 }];
        assert_eq!(icvar_exploration(&kids, 11, 3, &cfg), Some(1));
    }

    #[test]
    fn lower_confidence_rule_hand_case() {
        // V = {1.0, 1.2}; choose c and visits so that bonuses are {0.05, 0.50}
        let mut cfg = config(1.0);
        cfg.delta = 1.0;
        let parent = 1; // ln(geometric_sum(1, 2)) = ln 2
        let unit = 2f64.ln().sqrt();
        // bonus = c * unit / sqrt(visits): visits 100 -> c*unit/10, visits 1 -> c*unit
        cfg.c_explore = 0.5 / unit;
        let kids = [ChildStats { visits: 100, value: 1.0 }, ChildStats { visits: 1, value: 1.2 }];
        let b0 = exploration_bonus(parent, 100, 2, cfg.alpha, 1.0, cfg.c_explore).unwrap();
        let b1 = exploration_bonus(parent, 1, 2, cfg.alpha, 1.0, cfg.c_explore).unwrap();
        assert!((b0 - 0.05).abs() < 1e-12 && (b1 - 0.5).abs() < 1e-12);
        assert_eq!(icvar_exploration(&kids, parent, 2, &cfg), Some(1));
    }

    #[test]
    fn widening_test() {
        assert!(should_widen(0, 0, 5.0, 0.0));
        assert!(should_widen(5, 100, 5.0, 0.0));
        assert!(!should_widen(6, 100, 5.0, 0.0));
        assert!(should_widen(0, 0, 1.0, 0.5));
        assert!(!should_widen(1, 0, 1.0, 0.5));
        assert!(should_widen(2, 4, 1.0, 0.5));
    }

    #[test]
    fn config_validation() {
        let mut c = config(0.5);
        c.validate().unwrap();
        c.alpha_o = 1.5;
        assert!(c.validate().is_err());
        let mut c = config(0.5);
        c.budget = Budget::Iterations(0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn budget_serde() {
        let b: Budget = serde_json::from_str(r#"{"iterations": 200}"#).unwrap();
        assert_eq!(b, Budget::Iterations(200));
        let b: Budget = serde_json::from_str(r#"{"seconds": 0.5}"#).unwrap();
        assert!(b.is_wall_clock());
    }
}
