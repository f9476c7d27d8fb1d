//! Finite-time error bounds for the sparse-sampling estimators and the
//! exploration bonus derived from them.
//!
//! All quantities are in cost units. `remaining` is the number of steps left
//! until the horizon (`T - t`); at `remaining = 0` the estimators are exact
//! and every bound is zero.

use crate::cvar::RiskLevel;
use crate::error::{IcvarError, Result};
use serde::{Deserialize, Serialize};

/// Inputs shared by the policy-evaluation and sparse-sampling bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonParams {
    pub remaining: u32,
    pub alpha: RiskLevel,
    pub gamma: f64,
    /// `R_max - R_min` of the per-step cost.
    pub delta_r: f64,
    pub delta: f64,
    pub n_b: u32,
    pub n_actions: u32,
}

impl HorizonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(IcvarError::domain(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(IcvarError::domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.delta_r >= 0.0 && self.delta_r.is_finite()) {
            return Err(IcvarError::domain(format!("cost range must be >= 0, got {}", self.delta_r)));
        }
        if self.n_b == 0 || self.n_actions == 0 {
            return Err(IcvarError::domain("branching factor and action count must be positive"));
        }
        Ok(())
    }
}

/// `sum_{k=0}^{d-1} m^k`, i.e. `(m^d - 1) / (m - 1)` with the `m = 1` limit `d`.
pub fn geometric_sum(m: u64, d: u32) -> Result<f64> {
    if m == 0 {
        return Err(IcvarError::domain("geometric ratio must be >= 1"));
    }
    let ratio = m as f64;
    let mut term = 1.0;
    let mut total = 0.0;
    for _ in 0..d {
        total += term;
        term *= ratio;
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(IcvarError::Resource(format!("geometric sum {m}^{d} overflows f64")))
    }
}

/// Natural log of [`geometric_sum`], evaluated without forming `m^d`.
/// Returns `-inf` for `d = 0`.
pub fn ln_geometric_sum(m: u64, d: u32) -> f64 {
    if d == 0 {
        return f64::NEG_INFINITY;
    }
    if m <= 1 {
        return (d as f64).ln();
    }
    let ln_m = (m as f64).ln();
    // (m^d - 1)/(m - 1) = m^(d-1) * (1 - m^-d) / (1 - 1/m)
    (d - 1) as f64 * ln_m + (-(-(d as f64) * ln_m).exp()).ln_1p() - (-1.0 / m as f64).ln_1p()
}

/// `sum_{k=0}^{remaining-1} (remaining - k) / alpha^k`.
pub fn t_alpha(remaining: u32, alpha: RiskLevel) -> f64 {
    (0..remaining)
        .map(|k| (remaining - k) as f64 / alpha.get().powi(k as i32))
        .sum()
}

/// `sum_{j=0}^{remaining-1} (remaining + 1 - j) / alpha^j`.
pub fn t_prime_alpha(remaining: u32, alpha: RiskLevel) -> f64 {
    (0..remaining)
        .map(|j| (remaining + 1 - j) as f64 / alpha.get().powi(j as i32))
        .sum()
}

/// Radii `(upper, lower)` such that, each with probability `>= 1 - delta`,
/// `Q - Q_hat <= upper` and `Q - Q_hat >= lower` for ICVaR policy evaluation.
/// `lower` is returned as a non-positive number. `n_actions` is ignored.
pub fn policy_eval_bounds(p: &HorizonParams) -> Result<(f64, f64)> {
    p.validate()?;
    if p.remaining == 0 {
        return Ok((0.0, 0.0));
    }
    let ln_nodes = ln_geometric_sum(p.n_b as u64, p.remaining);
    Ok(radii(p, ln_nodes, ln_nodes))
}

/// Same as [`policy_eval_bounds`] for ICVaR sparse sampling, where the
/// union bound runs over all `|A| * N_b` successors per level and all actions.
pub fn sparse_sampling_bounds(p: &HorizonParams) -> Result<(f64, f64)> {
    p.validate()?;
    if p.remaining == 0 {
        return Ok((0.0, 0.0));
    }
    let branching = p.n_actions as u64 * p.n_b as u64;
    let ln_nodes = (p.n_actions as f64).ln() + ln_geometric_sum(branching, p.remaining);
    Ok(radii(p, ln_nodes, ln_nodes))
}

fn radii(p: &HorizonParams, ln_nodes_upper: f64, ln_nodes_lower: f64) -> (f64, f64) {
    let a = p.alpha.get();
    let n_b = p.n_b as f64;
    let scale = p.gamma * p.delta_r;
    let ln_delta = p.delta.ln();

    let upper_log = 3f64.ln() + ln_nodes_upper - ln_delta;
    let upper = scale * t_alpha(p.remaining, p.alpha) * (5.0 * upper_log / (a * n_b)).sqrt();

    let lower_log = ln_nodes_lower - ln_delta;
    let lower = -(scale / a) * (lower_log / (2.0 * n_b)).sqrt() * t_prime_alpha(p.remaining, p.alpha);
    (upper, lower)
}

/// Optimism bonus subtracted from an action's value during tree search:
///
/// `c * sqrt( ln(sum_{k<remaining} visits_parent^k / delta) / (alpha * visits_action) )`.
pub fn exploration_bonus(
    visits_parent: u64,
    visits_action: u64,
    remaining: u32,
    alpha: RiskLevel,
    delta: f64,
    c_explore: f64,
) -> Result<f64> {
    if remaining == 0 {
        return Err(IcvarError::domain("exploration bonus needs remaining depth >= 1"));
    }
    if visits_action == 0 {
        return Err(IcvarError::domain("unvisited actions are force-selected, not scored"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(IcvarError::domain(format!("delta must lie in (0, 1], got {delta}")));
    }
    if c_explore == 0.0 {
        return Ok(0.0);
    }
    let log_arg = ln_geometric_sum(visits_parent.max(1), remaining) - delta.ln();
    Ok(c_explore * (log_arg.max(0.0) / (alpha.get() * visits_action as f64)).sqrt())
}
