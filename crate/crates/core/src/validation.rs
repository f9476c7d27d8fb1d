//! Empirical coverage of the finite-sample error bounds on TinyChain.
//!
//! Each trial runs an estimator with its own rng stream and compares it
//! with the exact oracle value; a violation is counted when the error
//! leaves the one-sided bound. The theorems promise violation rates of at
//! most `delta` on each side.

use crate::bounds::{policy_eval_bounds, sparse_sampling_bounds, HorizonParams};
use crate::env::tinychain::{brute_force_icvar, OracleMode, TinyChain, TinyChainSpec};
use crate::error::{IcvarError, Result};
use crate::model::{substream, GenerativeModel, ParticleBelief, SimRng};
use crate::sparse::{estimate_q_pi, estimate_v_star, EvalConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which estimator a coverage campaign exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    PolicyEvaluation,
    SparseSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub eval: EvalConfig,
    /// Particles in the root belief.
    pub n_particles: usize,
    pub trials: u32,
    pub delta: f64,
    pub seed: u64,
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        self.eval.validate()?;
        if self.n_particles == 0 || self.trials == 0 {
            return Err(IcvarError::config("particles and trials must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(IcvarError::config("delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub estimator: Estimator,
    pub environment: String,
    pub trials: u32,
    pub violations_upper: u32,
    pub violations_lower: u32,
    pub delta: f64,
    pub seed: u64,
    pub bound_params: HorizonParams,
    pub upper_radius: f64,
    pub lower_radius: f64,
    pub oracle_value: f64,
    /// Mean of `truth - estimate` over trials.
    pub mean_error: f64,
    pub mean_abs_error: f64,
}

impl CoverageReport {
    pub fn upper_rate(&self) -> f64 {
        self.violations_upper as f64 / self.trials as f64
    }

    pub fn lower_rate(&self) -> f64 {
        self.violations_lower as f64 / self.trials as f64
    }

    /// Both one-sided violation rates are at most `delta`.
    pub fn holds(&self) -> bool {
        self.upper_rate() <= self.delta && self.lower_rate() <= self.delta
    }
}

/// Deterministic fixture policy: the action indexed by the most probable
/// state (mod the number of actions). Invariant to particle order.
pub fn majority_state_policy(spec: &TinyChainSpec) -> impl Fn(&ParticleBelief<usize>) -> usize + Sync + '_ {
    move |b: &ParticleBelief<usize>| {
        let mut mass = vec![0.0; spec.n_states()];
        for (s, w) in b.iter() {
            mass[*s] += w;
        }
        // Masses equal up to rounding count as ties so the choice does not
        // depend on how the weights were normalized.
        let tol = 1e-9 * mass.iter().sum::<f64>();
        let mut best = 0;
        for s in 1..mass.len() {
            if mass[s] > mass[best] + tol {
                best = s;
            }
        }
        best % spec.n_actions()
    }
}

fn horizon_params(model: &TinyChain, cfg: &CoverageConfig, n_actions: usize) -> HorizonParams {
    let (lo, hi) = model.cost_range();
    HorizonParams {
        remaining: cfg.eval.horizon,
        alpha: cfg.eval.alpha,
        gamma: cfg.eval.gamma,
        delta_r: hi - lo,
        delta: cfg.delta,
        n_b: cfg.eval.n_b,
        n_actions: n_actions as u32,
    }
}

fn tally(
    estimator: Estimator,
    cfg: &CoverageConfig,
    params: HorizonParams,
    (upper, lower): (f64, f64),
    truth: f64,
    estimate: impl Fn(&mut SimRng) -> f64 + Sync,
) -> CoverageReport {
    let errors: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(cfg.seed, i as u64);
            truth - estimate(&mut rng)
        })
        .collect();
    let n = errors.len() as f64;
    CoverageReport {
        estimator,
        environment: "tinychain".into(),
        trials: cfg.trials,
        violations_upper: errors.iter().filter(|e| **e > upper).count() as u32,
        violations_lower: errors.iter().filter(|e| **e < lower).count() as u32,
        delta: cfg.delta,
        seed: cfg.seed,
        bound_params: params,
        upper_radius: upper,
        lower_radius: lower,
        oracle_value: truth,
        mean_error: errors.iter().sum::<f64>() / n,
        mean_abs_error: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
    }
}

/// Coverage of the policy-evaluation bounds for [`majority_state_policy`]
/// at its own root action.
pub fn validate_policy_eval_bounds(spec: &TinyChainSpec, cfg: &CoverageConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let model = TinyChain::new(spec.clone())?;
    let root = model.quantile_belief(cfg.n_particles);
    let policy = majority_state_policy(spec);
    let oracle = brute_force_icvar(&model, &root, cfg.eval.alpha, cfg.eval.horizon, &OracleMode::Policy(&policy))?;
    let params = horizon_params(&model, cfg, spec.n_actions());
    let radii = policy_eval_bounds(&params)?;
    let action = policy(&root);
    let pi = |b: &ParticleBelief<usize>, _: &TinyChain, _: &mut SimRng| policy(b);
    let estimate = |rng: &mut SimRng| estimate_q_pi(&root, &action, 0, &cfg.eval, &pi, &model, rng);
    Ok(tally(Estimator::PolicyEvaluation, cfg, params, radii, oracle.value, estimate))
}

/// Coverage of the sparse-sampling bounds against the optimal oracle value.
pub fn validate_sparse_sampling_bounds(spec: &TinyChainSpec, cfg: &CoverageConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let model = TinyChain::new(spec.clone())?;
    let root = model.quantile_belief(cfg.n_particles);
    let oracle = brute_force_icvar(&model, &root, cfg.eval.alpha, cfg.eval.horizon, &OracleMode::Optimal)?;
    let params = horizon_params(&model, cfg, spec.n_actions());
    let radii = sparse_sampling_bounds(&params)?;
    let estimate = |rng: &mut SimRng| {
        estimate_v_star(&root, 0, &cfg.eval, &model, rng).map(|(v, _)| v).expect("finite non-empty action set")
    };
    Ok(tally(Estimator::SparseSampling, cfg, params, radii, oracle.value, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::RiskLevel;

    fn cfg(alpha: f64, n_b: u32, trials: u32) -> CoverageConfig {
        let spec = TinyChainSpec::benchmark();
        CoverageConfig {
            eval: EvalConfig { n_b, horizon: 2, alpha: RiskLevel::new(alpha).unwrap(), gamma: spec.gamma },
            n_particles: 3,
            trials,
            delta: 0.1,
            seed: 11,
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let spec = TinyChainSpec::benchmark();
        let a = validate_policy_eval_bounds(&spec, &cfg(0.5, 2, 40)).unwrap();
        let b = validate_policy_eval_bounds(&spec, &cfg(0.5, 2, 40)).unwrap();
        assert_eq!(a, b);
        assert!(a.violations_upper <= a.trials && a.violations_lower <= a.trials);
    }

    #[test]
    fn reported_radii_match_bounds_module() {
        let spec = TinyChainSpec::benchmark();
        let r = validate_sparse_sampling_bounds(&spec, &cfg(0.3, 2, 10)).unwrap();
        let (u, l) = sparse_sampling_bounds(&r.bound_params).unwrap();
        assert_eq!((r.upper_radius, r.lower_radius), (u, l));
    }

    #[test]
    fn alpha_one_holds() {
        let spec = TinyChainSpec::benchmark();
        assert!(validate_policy_eval_bounds(&spec, &cfg(1.0, 2, 50)).unwrap().holds());
    }

    #[test]
    fn invalid_config_rejected() {
        let spec = TinyChainSpec::benchmark();
        let mut c = cfg(0.5, 2, 10);
        c.trials = 0;
        assert!(validate_policy_eval_bounds(&spec, &c).is_err());
    }
}
