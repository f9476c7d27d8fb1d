//! Cross-checks of the TinyChain brute-force ICVaR oracle against
//! independent reference computations.

use icvar_core::env::{brute_force_icvar, OracleMode, TinyChain, TinyChainSpec};
use icvar_core::validation::majority_state_policy;
use icvar_core::{ParticleBelief, RiskLevel};

fn alpha(a: f64) -> RiskLevel {
    RiskLevel::new(a).unwrap()
}

/// Upper-tail CVaR of a discrete distribution by the infimum formula,
/// minimized over the atoms.
fn cvar_by_infimum(outcomes: &[(f64, f64)], a: f64) -> f64 {
    outcomes
        .iter()
        .map(|&(y, _)| y + outcomes.iter().map(|&(v, p)| p * (v - y).max(0.0)).sum::<f64>() / a)
        .fold(f64::INFINITY, f64::min)
}

type Policy<'a> = &'a (dyn Fn(&ParticleBelief<usize>) -> usize + Sync);

/// Reference oracle that enumerates every ordered tuple of particle moves
/// (no grouping, no memoization, no canonical merging).
struct Ordered<'a> {
    spec: &'a TinyChainSpec,
    alpha: f64,
    policy: Option<Policy<'a>>,
}

impl Ordered<'_> {
    fn v(&self, particles: &[usize], weights: &[f64], remaining: u32) -> f64 {
        if remaining == 0 {
            return 0.0;
        }
        match self.policy {
            Some(pi) => {
                let b = ParticleBelief::new(particles.to_vec(), weights.to_vec()).unwrap();
                self.q(particles, weights, pi(&b), remaining)
            }
            None => (0..self.spec.cost[0].len())
                .map(|a| self.q(particles, weights, a, remaining))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn q(&self, particles: &[usize], weights: &[f64], a: usize, remaining: u32) -> f64 {
        let spec = self.spec;
        let total: f64 = weights.iter().sum();
        let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        let rho: f64 = particles.iter().zip(&w).map(|(&s, wi)| wi * spec.cost[s][a]).sum();
        let ns = spec.initial.len();
        let n_obs = spec.observation[0].len();
        let n = particles.len();

        let mut outcomes = Vec::new();
        for z in 0..n_obs {
            let p_z: f64 = particles
                .iter()
                .zip(&w)
                .map(|(&s, wi)| wi * (0..ns).map(|s2| spec.transition[s][a][s2] * spec.observation[s2][z]).sum::<f64>())
                .sum();
            if p_z == 0.0 {
                continue;
            }
            for code in 0..ns.pow(n as u32) {
                let mut c = code;
                let mut next = Vec::with_capacity(n);
                let mut prob = 1.0;
                for &s in particles {
                    let s2 = c % ns;
                    c /= ns;
                    prob *= spec.transition[s][a][s2];
                    next.push(s2);
                }
                if prob == 0.0 {
                    continue;
                }
                let mut nw: Vec<f64> = next.iter().zip(&w).map(|(&s2, wi)| wi * spec.observation[s2][z]).collect();
                if nw.iter().all(|x| *x <= 0.0) {
                    nw = vec![1.0; n];
                }
                outcomes.push((self.v(&next, &nw, remaining - 1), p_z * prob));
            }
        }
        rho + spec.gamma * cvar_by_infimum(&outcomes, self.alpha)
    }
}

#[test]
fn oracle_matches_ordered_enumeration() {
    let spec = TinyChainSpec::benchmark();
    let model = TinyChain::new(spec.clone()).unwrap();
    for (n, horizon) in [(1, 3), (2, 3), (3, 2)] {
        let root = model.quantile_belief(n);
        for a in [0.1, 0.35, 1.0] {
            let reference = Ordered { spec: &spec, alpha: a, policy: None };
            let expected = reference.v(root.particles(), root.weights(), horizon);
            let got = brute_force_icvar(&model, &root, alpha(a), horizon, &OracleMode::Optimal).unwrap();
            assert!((got.value - expected).abs() < 1e-9, "n={n} T={horizon} alpha={a}: {} vs {expected}", got.value);
        }
    }
}

#[test]
fn policy_mode_matches_ordered_enumeration() {
    let spec = TinyChainSpec::benchmark();
    let model = TinyChain::new(spec.clone()).unwrap();
    let policy = majority_state_policy(&spec);
    let pi = |b: &ParticleBelief<usize>| policy(b);
    let root = model.quantile_belief(2);
    for a in [0.2, 0.5, 1.0] {
        let reference = Ordered { spec: &spec, alpha: a, policy: Some(&pi) };
        let expected = reference.v(root.particles(), root.weights(), 3);
        let got = brute_force_icvar(&model, &root, alpha(a), 3, &OracleMode::Policy(&policy)).unwrap();
        assert!((got.value - expected).abs() < 1e-9, "alpha={a}: {} vs {expected}", got.value);
    }
}

/// With observations that carry no information the particle weights never
/// change, so under a fixed action the alpha = 1 value is the plain Markov
/// chain expectation `sum_t gamma^t mu P^t c`, with `mu` the empirical
/// particle distribution.
#[test]
fn risk_neutral_value_matches_markov_chain_expectation() {
    let mut spec = TinyChainSpec::benchmark();
    spec.observation = vec![vec![0.5, 0.5]; 3];
    let model = TinyChain::new(spec.clone()).unwrap();
    let root = model.quantile_belief(3);
    for action in 0..2 {
        let constant = move |_: &ParticleBelief<usize>| action;
        let mut mu = [0.0; 3];
        for &s in root.particles() {
            mu[s] += 1.0 / 3.0;
        }
        let mut expected = 0.0;
        let mut discount = 1.0;
        for _ in 0..3 {
            expected += discount * (0..3).map(|s| mu[s] * spec.cost[s][action]).sum::<f64>();
            let mut next = [0.0; 3];
            for (s, m) in mu.iter().enumerate() {
                for (s2, n) in next.iter_mut().enumerate() {
                    *n += m * spec.transition[s][action][s2];
                }
            }
            mu = next;
            discount *= spec.gamma;
        }
        let got = brute_force_icvar(&model, &root, RiskLevel::NEUTRAL, 3, &OracleMode::Policy(&constant)).unwrap();
        assert!((got.value - expected).abs() < 1e-9, "action {action}: {} vs {expected}", got.value);
    }
}

#[test]
fn optimal_value_never_exceeds_any_policy_value() {
    let spec = TinyChainSpec::benchmark();
    let model = TinyChain::new(spec.clone()).unwrap();
    let majority = majority_state_policy(&spec);
    let always0 = |_: &ParticleBelief<usize>| 0usize;
    let always1 = |_: &ParticleBelief<usize>| 1usize;
    let policies: [Policy; 3] = [&majority, &always0, &always1];
    for n in [1, 2, 3] {
        let root = model.quantile_belief(n);
        for a in [0.05, 0.3, 0.7, 1.0] {
            let opt = brute_force_icvar(&model, &root, alpha(a), 3, &OracleMode::Optimal).unwrap();
            for pi in policies {
                let v = brute_force_icvar(&model, &root, alpha(a), 3, &OracleMode::Policy(pi)).unwrap();
                assert!(opt.value <= v.value + 1e-12, "n={n} alpha={a}: {} > {}", opt.value, v.value);
            }
        }
    }
}

#[test]
fn value_is_monotone_in_risk_level() {
    // Smaller alpha looks further into the upper tail of cost.
    let model = TinyChain::new(TinyChainSpec::benchmark()).unwrap();
    let root = model.quantile_belief(2);
    let values: Vec<f64> = [0.05, 0.2, 0.5, 1.0]
        .iter()
        .map(|&a| brute_force_icvar(&model, &root, alpha(a), 3, &OracleMode::Optimal).unwrap().value)
        .collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1] - 1e-12), "{values:?}");
}
