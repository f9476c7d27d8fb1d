//! ICVaR policy evaluation and ICVaR sparse sampling.
//!
//! Both recurse to a fixed horizon, draw `n_b` successor beliefs per
//! (belief, action) with [`gen_pf`], and aggregate the successor values with
//! the empirical CVaR:
//!
//! ```text
//! Q(b, a) = rho(b, a) + gamma * C_alpha({ V(b'_i) }_{i=1..n_b})
//! ```
//!
//! The immediate cost `rho` is taken once per (belief, action) from the first
//! successor draw.

use crate::cvar::{cvar_of_slice, RiskLevel};
use crate::error::{IcvarError, Result};
use crate::model::{gen_pf, ActionSpace, GenerativeModel, ParticleBelief, SimRng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_b: u32,
    pub horizon: u32,
    pub alpha: RiskLevel,
    pub gamma: f64,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 {
            return Err(IcvarError::config("n_b must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(IcvarError::config("horizon must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(IcvarError::config("gamma must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A (possibly stochastic) mapping from beliefs to actions.
pub trait BeliefPolicy<M: GenerativeModel> {
    fn act(&self, belief: &ParticleBelief<M::State>, model: &M, rng: &mut SimRng) -> M::Action;
}

impl<M, F> BeliefPolicy<M> for F
where
    M: GenerativeModel,
    F: Fn(&ParticleBelief<M::State>, &M, &mut SimRng) -> M::Action,
{
    fn act(&self, belief: &ParticleBelief<M::State>, model: &M, rng: &mut SimRng) -> M::Action {
        self(belief, model, rng)
    }
}

/// Estimate of `V^pi_t(b)`; zero once `t >= horizon`.
pub fn estimate_v_pi<M: GenerativeModel, P: BeliefPolicy<M> + ?Sized>(
    belief: &ParticleBelief<M::State>,
    t: u32,
    cfg: &EvalConfig,
    policy: &P,
    model: &M,
    rng: &mut SimRng,
) -> f64 {
    if t >= cfg.horizon {
        return 0.0;
    }
    let action = policy.act(belief, model, rng);
    estimate_q_pi(belief, &action, t, cfg, policy, model, rng)
}

/// Estimate of `Q^pi_t(b, a)` from `n_b` sampled successors.
pub fn estimate_q_pi<M: GenerativeModel, P: BeliefPolicy<M> + ?Sized>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    t: u32,
    cfg: &EvalConfig,
    policy: &P,
    model: &M,
    rng: &mut SimRng,
) -> f64 {
    let mut rho = None;
    let mut values = Vec::with_capacity(cfg.n_b as usize);
    for _ in 0..cfg.n_b {
        let tr = gen_pf(belief, action, model, rng);
        rho.get_or_insert(tr.mean_cost);
        values.push(estimate_v_pi(&tr.next_belief, t + 1, cfg, policy, model, rng));
    }
    rho.unwrap_or(0.0) + cfg.gamma * cvar_of_slice(&values, cfg.alpha)
}

/// Estimate of `V*_t(b)` with its minimizing action (lowest index on ties).
/// At `t >= horizon` the value is 0 and the action is the first one.
pub fn estimate_v_star<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    t: u32,
    cfg: &EvalConfig,
    model: &M,
    rng: &mut SimRng,
) -> Result<(f64, M::Action)> {
    let actions = match model.actions() {
        ActionSpace::Finite(a) if !a.is_empty() => a,
        ActionSpace::Finite(_) => return Err(IcvarError::domain("empty action set")),
        ActionSpace::Sampled => {
            return Err(IcvarError::domain("sparse sampling needs an enumerable action set"))
        }
    };
    Ok(v_star(belief, t, cfg, &actions, model, rng))
}

/// Estimate of `Q*_t(b, a)`.
pub fn estimate_q_star<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    t: u32,
    cfg: &EvalConfig,
    model: &M,
    rng: &mut SimRng,
) -> Result<f64> {
    let actions = match model.actions() {
        ActionSpace::Finite(a) if !a.is_empty() => a,
        _ => return Err(IcvarError::domain("sparse sampling needs a non-empty enumerable action set")),
    };
    Ok(q_star(belief, action, t, cfg, &actions, model, rng))
}

fn v_star<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    t: u32,
    cfg: &EvalConfig,
    actions: &[M::Action],
    model: &M,
    rng: &mut SimRng,
) -> (f64, M::Action) {
    if t >= cfg.horizon {
        return (0.0, actions[0].clone());
    }
    let mut best = (f64::INFINITY, 0);
    for (i, a) in actions.iter().enumerate() {
        let q = q_star(belief, a, t, cfg, actions, model, rng);
        if q < best.0 {
            best = (q, i);
        }
    }
    (best.0, actions[best.1].clone())
}

fn q_star<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    t: u32,
    cfg: &EvalConfig,
    actions: &[M::Action],
    model: &M,
    rng: &mut SimRng,
) -> f64 {
    let mut rho = None;
    let mut values = Vec::with_capacity(cfg.n_b as usize);
    for _ in 0..cfg.n_b {
        let tr = gen_pf(belief, action, model, rng);
        rho.get_or_insert(tr.mean_cost);
        values.push(v_star(&tr.next_belief, t + 1, cfg, actions, model, rng).0);
    }
    rho.unwrap_or(0.0) + cfg.gamma * cvar_of_slice(&values, cfg.alpha)
}
