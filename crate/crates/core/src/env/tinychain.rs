//! A tabular POMDP small enough that the particle-belief MDP it induces can
//! be solved exactly by enumeration. Used as ground truth for the sampled
//! planners and for the bound-coverage campaigns.

use crate::cvar::RiskLevel;
use crate::error::{IcvarError, Result};
use crate::model::{ActionSpace, GenerativeModel, ParticleBelief, SimRng, Transition};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const MAX_STATES: usize = 6;
pub const MAX_ACTIONS: usize = 3;
pub const MAX_OBSERVATIONS: usize = 3;
pub const MAX_HORIZON: u32 = 4;
/// Cap on distinct (depth, belief) pairs the oracle may visit.
pub const MAX_ORACLE_NODES: usize = 1_000_000;

/// Explicit tables of a TinyChain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyChainSpec {
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `observation[s'][z]`
    pub observation: Vec<Vec<f64>>,
    /// `cost[s][a]`
    pub cost: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub gamma: f64,
    pub horizon: u32,
}

impl TinyChainSpec {
    /// Three states, two actions, two noisy observations. Action 0 drifts to
    /// the middle state; action 1 gambles between the cheap and the expensive
    /// state.
    pub fn benchmark() -> Self {
        Self {
            transition: vec![
                vec![vec![0.2, 0.7, 0.1], vec![0.6, 0.1, 0.3]],
                vec![vec![0.1, 0.8, 0.1], vec![0.5, 0.1, 0.4]],
                vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.1, 0.5]],
            ],
            observation: vec![vec![0.85, 0.15], vec![0.5, 0.5], vec![0.2, 0.8]],
            cost: vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![9.0, 8.0]],
            initial: vec![0.5, 0.3, 0.2],
            gamma: 0.9,
            horizon: 3,
        }
    }

    /// Start state, a sure "mid" outcome (cost 8) for action 0 and a
    /// good/bad gamble (cost 0 w.p. 0.8, 20 w.p. 0.2) for action 1.
    /// Equal-ish means, very different upper tails: the gamble is
    /// expectation-optimal but CVaR_0.1-suboptimal.
    pub fn risky_safe() -> Self {
        let absorbing = |s: usize| {
            let mut row = vec![0.0; 4];
            row[s] = 1.0;
            vec![row.clone(), row]
        };
        Self {
            transition: vec![
                vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.8, 0.2, 0.0]],
                absorbing(1),
                absorbing(2),
                absorbing(3),
            ],
            observation: vec![
                vec![1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            cost: vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![20.0, 20.0], vec![8.0, 8.0]],
            initial: vec![1.0, 0.0, 0.0, 0.0],
            gamma: 1.0,
            horizon: 2,
        }
    }

    /// `n_states`-long deterministic single-action chain `0 -> 1 -> ... -> last`
    /// (the last state absorbs) with the given per-state costs.
    pub fn deterministic_chain(costs: &[f64], gamma: f64, horizon: u32) -> Self {
        let n = costs.len();
        let transition = (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                row[(s + 1).min(n - 1)] = 1.0;
                vec![row]
            })
            .collect();
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Self {
            transition,
            observation: vec![vec![1.0]; n],
            cost: costs.iter().map(|c| vec![*c]).collect(),
            initial,
            gamma,
            horizon,
        }
    }

    /// Copy of this spec that keeps only action `action`.
    pub fn single_action(&self, action: usize) -> Result<Self> {
        if action >= self.n_actions() {
            return Err(IcvarError::domain(format!("action {action} out of range")));
        }
        let mut out = self.clone();
        out.transition = self.transition.iter().map(|row| vec![row[action].clone()]).collect();
        out.cost = self.cost.iter().map(|row| vec![row[action]]).collect();
        Ok(out)
    }

    pub fn n_states(&self) -> usize {
        self.transition.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transition.first().map_or(0, Vec::len)
    }

    pub fn n_observations(&self) -> usize {
        self.observation.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na, no) = (self.n_states(), self.n_actions(), self.n_observations());
        if ns == 0 || ns > MAX_STATES {
            return Err(IcvarError::config(format!("tinychain needs 1..={MAX_STATES} states, got {ns}")));
        }
        if na == 0 || na > MAX_ACTIONS {
            return Err(IcvarError::config(format!("tinychain needs 1..={MAX_ACTIONS} actions, got {na}")));
        }
        if no == 0 || no > MAX_OBSERVATIONS {
            return Err(IcvarError::config(format!(
                "tinychain needs 1..={MAX_OBSERVATIONS} observations, got {no}"
            )));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(IcvarError::config(format!("tinychain horizon must be 1..={MAX_HORIZON}")));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(IcvarError::config("tinychain gamma must lie in (0, 1]"));
        }
        let check_row = |row: &[f64], len: usize, what: &str| -> Result<()> {
            if row.len() != len || row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                return Err(IcvarError::config(format!("malformed {what} row")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(IcvarError::config(format!("{what} row sums to {sum}, not 1")));
            }
            Ok(())
        };
        for per_state in &self.transition {
            if per_state.len() != na {
                return Err(IcvarError::config("ragged transition table"));
            }
            for row in per_state {
                check_row(row, ns, "transition")?;
            }
        }
        if self.observation.len() != ns {
            return Err(IcvarError::config("observation table needs one row per state"));
        }
        for row in &self.observation {
            check_row(row, no, "observation")?;
        }
        check_row(&self.initial, ns, "initial")?;
        if self.cost.len() != ns || self.cost.iter().any(|r| r.len() != na || r.iter().any(|c| !c.is_finite())) {
            return Err(IcvarError::config("cost table must be n_states x n_actions and finite"));
        }
        Ok(())
    }
}

/// Tabular generative model built from a validated [`TinyChainSpec`].
#[derive(Debug, Clone)]
pub struct TinyChain {
    spec: TinyChainSpec,
}

impl TinyChain {
    pub fn new(spec: TinyChainSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &TinyChainSpec {
        &self.spec
    }

    /// Deterministic particle belief: particle `i` sits at the state whose
    /// cumulative initial mass first exceeds `(i + 0.5) / n`.
    pub fn quantile_belief(&self, n_particles: usize) -> ParticleBelief<usize> {
        let n = n_particles.max(1);
        let particles = (0..n)
            .map(|i| draw(&self.spec.initial, (i as f64 + 0.5) / n as f64))
            .collect();
        ParticleBelief::uniform(particles).expect("non-empty")
    }
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

impl GenerativeModel for TinyChain {
    type State = usize;
    type Action = usize;
    type Observation = usize;

    fn step(&self, s: &usize, a: &usize, rng: &mut SimRng) -> Transition<usize, usize> {
        let next = draw(&self.spec.transition[*s][*a], rng.random());
        let observation = draw(&self.spec.observation[next], rng.random());
        Transition { next_state: next, observation, cost: self.spec.cost[*s][*a] }
    }

    fn cost(&self, s: &usize, a: &usize, _next: &usize) -> f64 {
        self.spec.cost[*s][*a]
    }

    fn obs_density(&self, z: &usize, _a: &usize, next: &usize) -> f64 {
        self.spec.observation[*next][*z]
    }

    fn sample_initial_state(&self, rng: &mut SimRng) -> usize {
        draw(&self.spec.initial, rng.random())
    }

    fn actions(&self) -> ActionSpace<usize> {
        ActionSpace::Finite((0..self.spec.n_actions()).collect())
    }

    fn cost_range(&self) -> (f64, f64) {
        let all = self.spec.cost.iter().flatten();
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn discount(&self) -> f64 {
        self.spec.gamma
    }

    fn is_terminal(&self, _: &usize) -> bool {
        false
    }
}

/// What the oracle optimizes.
pub enum OracleMode<'a> {
    /// Follow a deterministic belief-to-action policy.
    Policy(&'a (dyn Fn(&ParticleBelief<usize>) -> usize + Sync)),
    /// Minimize over actions at every level.
    Optimal,
}

/// Exact ICVaR value of a root particle belief.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    /// Root action values in action-index order (only the policy's action in
    /// policy mode; the other entries are `NaN`).
    pub q_values: Vec<f64>,
    /// Minimizing root action (lowest index on ties); the policy's action in
    /// policy mode.
    pub best_action: usize,
    pub nodes: usize,
}

/// Exact CVaR of the upper `alpha`-tail of a finite discrete distribution.
pub fn discrete_cvar(outcomes: &[(f64, f64)], alpha: RiskLevel) -> f64 {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let a = alpha.get();
    let mut remaining = a;
    let mut acc = 0.0;
    for &(v, p) in &sorted {
        if remaining <= 0.0 {
            break;
        }
        let take = p.min(remaining);
        acc += take * v;
        remaining -= take;
    }
    if remaining > 0.0 {
        if let Some(&(v, _)) = sorted.last() {
            acc += remaining * v;
        }
    }
    acc / a
}

type BeliefKey = Vec<(usize, i64)>;

struct Oracle<'a> {
    spec: &'a TinyChainSpec,
    alpha: RiskLevel,
    mode: &'a OracleMode<'a>,
    memo: HashMap<(u32, BeliefKey), f64>,
}

/// Normalized, particle-order-independent representation used for merging.
fn canonical(particles: &[usize], weights: &[f64]) -> (BeliefKey, Vec<usize>, Vec<f64>) {
    let total: f64 = weights.iter().sum();
    let mut pairs: Vec<(usize, f64)> = particles.iter().copied().zip(weights.iter().map(|w| w / total)).collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let key = pairs.iter().map(|(s, w)| (*s, (w * 1e12).round() as i64)).collect();
    let (p, w) = pairs.into_iter().unzip();
    (key, p, w)
}

/// Every way of splitting `m` draws over `support` with its multinomial
/// probability under `probs`.
fn multinomial(support: &[usize], probs: &[f64], m: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(support: &[usize], probs: &[f64], left: usize, counts: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>, m: usize) {
        if counts.len() + 1 == support.len() {
            counts.push(left);
            let mut p = ln_factorial(m);
            for (k, &y) in support.iter().enumerate() {
                p += counts[k] as f64 * probs[y].ln() - ln_factorial(counts[k]);
            }
            out.push((counts.clone(), p.exp()));
            counts.pop();
            return;
        }
        for c in 0..=left {
            counts.push(c);
            rec(support, probs, left - c, counts, out, m);
            counts.pop();
        }
    }
    let mut out = Vec::new();
    if support.is_empty() {
        return out;
    }
    rec(support, probs, m, &mut Vec::new(), &mut out, m);
    out
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

impl<'a> Oracle<'a> {
    /// Successor beliefs of `(particles, weights)` under `action` with their
    /// probabilities, merged by canonical form.
    fn successors(&self, particles: &[usize], weights: &[f64], action: usize) -> Vec<(BeliefKey, Vec<usize>, Vec<f64>, f64)> {
        let spec = self.spec;
        let n = particles.len();
        let ns = spec.n_states();
        let mut merged: HashMap<BeliefKey, (Vec<usize>, Vec<f64>, f64)> = HashMap::new();
        let mut groups: Vec<(usize, f64, usize)> = Vec::new();
        for (&x, &w) in particles.iter().zip(weights) {
            match groups.iter_mut().find(|g| g.0 == x && g.1.to_bits() == w.to_bits()) {
                Some(g) => g.2 += 1,
                None => groups.push((x, w, 1)),
            }
        }

        for z in 0..spec.n_observations() {
            // anchor: x_i w.p. w_i, fresh step to y, z ~ O(.|y)
            let p_z: f64 = particles
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * (0..ns).map(|y| spec.transition[x][action][y] * spec.observation[y][z]).sum::<f64>())
                .sum();
            if p_z <= 0.0 {
                continue;
            }
            // every particle steps independently; identical particles are
            // exchangeable, so each group contributes a multinomial over counts
            let mut combos: Vec<(Vec<(usize, f64)>, f64)> = vec![(Vec::with_capacity(n), 1.0)];
            for &(x, w, m) in &groups {
                let support: Vec<usize> = (0..ns).filter(|&y| spec.transition[x][action][y] > 0.0).collect();
                let outcomes = multinomial(&support, &spec.transition[x][action], m);
                let mut next = Vec::with_capacity(combos.len() * outcomes.len());
                for (parts, prob) in &combos {
                    for (counts, q) in &outcomes {
                        let mut parts = parts.clone();
                        for (k, &y) in support.iter().enumerate() {
                            parts.extend(std::iter::repeat_n((y, w), counts[k]));
                        }
                        next.push((parts, prob * q));
                    }
                }
                combos = next;
            }
            for (parts, prob) in combos {
                let states: Vec<usize> = parts.iter().map(|p| p.0).collect();
                let mut w: Vec<f64> = parts.iter().map(|&(y, w)| w * spec.observation[y][z]).collect();
                if !w.iter().any(|v| *v > 0.0) {
                    w = vec![1.0 / n as f64; n];
                }
                let (key, p, w) = canonical(&states, &w);
                merged.entry(key).or_insert((p, w, 0.0)).2 += p_z * prob;
            }
        }
        merged.into_iter().map(|(k, (p, w, prob))| (k, p, w, prob)).collect()
    }

    fn q(&mut self, particles: &[usize], weights: &[f64], action: usize, remaining: u32) -> Result<f64> {
        let rho: f64 = particles.iter().zip(weights).map(|(&x, &w)| w * self.spec.cost[x][action]).sum();
        let mut outcomes = Vec::new();
        for (key, p, w, prob) in self.successors(particles, weights, action) {
            outcomes.push((self.v(key, &p, &w, remaining - 1)?, prob));
        }
        Ok(rho + self.spec.gamma * discrete_cvar(&outcomes, self.alpha))
    }

    fn v(&mut self, key: BeliefKey, particles: &[usize], weights: &[f64], remaining: u32) -> Result<f64> {
        if remaining == 0 {
            return Ok(0.0);
        }
        if let Some(v) = self.memo.get(&(remaining, key.clone())) {
            return Ok(*v);
        }
        if self.memo.len() >= MAX_ORACLE_NODES {
            return Err(IcvarError::Resource(format!(
                "oracle enumeration exceeded {MAX_ORACLE_NODES} belief nodes"
            )));
        }
        let value = match self.mode {
            OracleMode::Policy(policy) => {
                let b = ParticleBelief::new(particles.to_vec(), weights.to_vec())?;
                let a = policy(&b);
                self.q(particles, weights, a, remaining)?
            }
            OracleMode::Optimal => {
                let mut best = f64::INFINITY;
                for a in 0..self.spec.n_actions() {
                    best = best.min(self.q(particles, weights, a, remaining)?);
                }
                best
            }
        };
        self.memo.insert((remaining, key), value);
        Ok(value)
    }
}

/// Exact particle-belief-MDP ICVaR value of `root` with `horizon` steps to go.
///
/// Enumerates the full belief-transition distribution induced by the
/// particle-filter step (anchor draw, observation, independent particle
/// moves, reweighting with uniform reset on collapse) and applies the exact
/// CVaR of each finite successor-value distribution.
pub fn brute_force_icvar(
    model: &TinyChain,
    root: &ParticleBelief<usize>,
    alpha: RiskLevel,
    horizon: u32,
    mode: &OracleMode<'_>,
) -> Result<OracleValue> {
    let spec = model.spec();
    if root.particles().iter().any(|&s| s >= spec.n_states()) {
        return Err(IcvarError::domain("root belief references an unknown state"));
    }
    let mut oracle = Oracle { spec, alpha, mode, memo: HashMap::new() };
    let (_, particles, weights) = canonical(root.particles(), root.weights());
    let n_actions = spec.n_actions();
    if horizon == 0 {
        return Ok(OracleValue { value: 0.0, q_values: vec![0.0; n_actions], best_action: 0, nodes: 0 });
    }
    let mut q_values = vec![f64::NAN; n_actions];
    let best_action = match mode {
        OracleMode::Policy(policy) => {
            let a = policy(root);
            q_values[a] = oracle.q(&particles, &weights, a, horizon)?;
            a
        }
        OracleMode::Optimal => {
            for (a, q) in q_values.iter_mut().enumerate() {
                *q = oracle.q(&particles, &weights, a, horizon)?;
            }
            let mut best = 0;
            for a in 1..n_actions {
                if q_values[a] < q_values[best] {
                    best = a;
                }
            }
            best
        }
    };
    Ok(OracleValue { value: q_values[best_action], q_values, best_action, nodes: oracle.memo.len() })
}
