use crate::cvar::RiskLevel;
use crate::env::{LaserTagSpec, LightDarkSpec, TinyChainSpec};
use crate::error::{IcvarError, Result};
use crate::mcts::{Backup, Budget, MctsConfig};
use crate::sparse::EvalConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Environment together with its full parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id")]
pub enum EnvSpec {
    #[serde(rename = "lasertag")]
    LaserTag(LaserTagSpec),
    #[serde(rename = "lightdark")]
    LightDark(LightDarkSpec),
    #[serde(rename = "tinychain")]
    TinyChain(TinyChainSpec),
}

impl EnvSpec {
    /// Default spec for `lasertag`, `lightdark`, `tinychain` (the benchmark
    /// fixture) or `tinychain-risky` (the risky/safe fixture).
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lasertag" => Ok(EnvSpec::LaserTag(LaserTagSpec::default())),
            "lightdark" => Ok(EnvSpec::LightDark(LightDarkSpec::default())),
            "tinychain" => Ok(EnvSpec::TinyChain(TinyChainSpec::benchmark())),
            "tinychain-risky" => Ok(EnvSpec::TinyChain(TinyChainSpec::risky_safe())),
            other => Err(IcvarError::config(format!("unknown environment `{other}`"))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            EnvSpec::LaserTag(_) => "lasertag",
            EnvSpec::LightDark(_) => "lightdark",
            EnvSpec::TinyChain(_) => "tinychain",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::LaserTag(s) => s.validate(),
            EnvSpec::LightDark(s) => s.validate(),
            EnvSpec::TinyChain(s) => s.validate(),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            EnvSpec::LaserTag(s) => s.gamma,
            EnvSpec::LightDark(s) => s.gamma,
            EnvSpec::TinyChain(s) => s.gamma,
        }
    }

    pub fn max_steps(&self) -> u32 {
        match self {
            EnvSpec::LaserTag(s) => s.max_steps,
            EnvSpec::LightDark(s) => s.max_steps,
            EnvSpec::TinyChain(s) => s.horizon,
        }
    }

    fn cost_width(&self) -> f64 {
        match self {
            EnvSpec::LaserTag(s) => s.tag_reward + s.failed_tag_cost.max(s.step_cost) + s.danger_penalty,
            EnvSpec::LightDark(s) => s.goal_reward + s.obstacle_penalty.max(s.boundary_penalty),
            EnvSpec::TinyChain(s) => {
                let all = s.cost.iter().flatten();
                all.clone().copied().fold(f64::NEG_INFINITY, f64::max) - all.copied().fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    IcvarPomcpow,
    IcvarPftDpw,
    SparseSampling,
    /// Uniformly random actions; the baseline policy for policy evaluation.
    PolicyEval,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] =
        [PlannerKind::IcvarPomcpow, PlannerKind::IcvarPftDpw, PlannerKind::SparseSampling, PlannerKind::PolicyEval];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::IcvarPomcpow => "icvar-pomcpow",
            PlannerKind::IcvarPftDpw => "icvar-pft-dpw",
            PlannerKind::SparseSampling => "sparse-sampling",
            PlannerKind::PolicyEval => "policy-eval",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = IcvarError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| IcvarError::config(format!("unknown planner `{s}`")))
    }
}

fn default_eval_n_b() -> u32 {
    5
}

fn default_eval_horizon() -> u32 {
    3
}

fn default_true() -> bool {
    true
}

/// Everything needed to reproduce a batch of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub planner: PlannerKind,
    /// Tree-search settings; `mcts.alpha` is the planning risk level.
    pub mcts: MctsConfig,
    /// Sparse-sampling settings (used by `sparse-sampling` only).
    pub sparse: EvalConfig,
    pub episodes: u32,
    pub max_steps: u32,
    pub seed: u64,
    pub n_particles: usize,
    /// Branching factor of the policy-evaluation ICVaR metric.
    #[serde(default = "default_eval_n_b")]
    pub eval_n_b: u32,
    /// Horizon of the policy-evaluation ICVaR metric.
    #[serde(default = "default_eval_horizon")]
    pub eval_horizon: u32,
    /// Compute the policy-evaluation metric per episode (expensive).
    #[serde(default)]
    pub eval_icvar: bool,
    /// Resample the agent's belief after every observation update.
    #[serde(default = "default_true")]
    pub resample_agent_belief: bool,
}

impl RunConfig {
    /// Desk-scale defaults for an environment: the published widening
    /// parameters, depth 10, delta 0.05, c = depth * cost range, 20 particles.
    pub fn defaults(env: EnvSpec, planner: PlannerKind, alpha: RiskLevel) -> Self {
        let gamma = env.gamma();
        let depth = match &env {
            EnvSpec::TinyChain(s) => s.horizon,
            _ => 10,
        };
        let (k_a, alpha_a, k_o, alpha_o, n_particles) = match &env {
            EnvSpec::LaserTag(_) => (5.0, 0.0, 5.0, 0.5, 20),
            EnvSpec::LightDark(_) => (8.0, 0.0, 10.0, 0.01, 20),
            EnvSpec::TinyChain(s) => (s.n_actions() as f64, 0.0, 4.0, 0.5, 4),
        };
        let mcts = MctsConfig {
            k_a,
            alpha_a,
            k_o,
            alpha_o,
            d_max: depth,
            alpha,
            delta: 0.05,
            c_explore: depth as f64 * env.cost_width(),
            budget: Budget::Iterations(1000),
            gamma,
            backup: Backup::Icvar,
        };
        let sparse = EvalConfig { n_b: 4, horizon: depth.min(3), alpha, gamma };
        let max_steps = env.max_steps();
        RunConfig {
            env,
            planner,
            mcts,
            sparse,
            episodes: 10,
            max_steps,
            seed: 0,
            n_particles,
            eval_n_b: default_eval_n_b(),
            eval_horizon: default_eval_horizon(),
            eval_icvar: false,
            resample_agent_belief: true,
        }
    }

    pub fn alpha(&self) -> RiskLevel {
        self.mcts.alpha
    }

    /// Sets the risk level of every component.
    pub fn set_alpha(&mut self, alpha: RiskLevel) {
        self.mcts.alpha = alpha;
        self.sparse.alpha = alpha;
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.mcts.validate()?;
        self.sparse.validate()?;
        if self.episodes == 0 || self.max_steps == 0 || self.n_particles == 0 {
            return Err(IcvarError::config("episodes, max_steps and n_particles must be positive"));
        }
        if self.eval_n_b == 0 || self.eval_horizon == 0 {
            return Err(IcvarError::config("eval_n_b and eval_horizon must be positive"));
        }
        if self.planner == PlannerKind::SparseSampling && matches!(self.env, EnvSpec::LightDark(_)) {
            return Err(IcvarError::config("sparse sampling needs a finite action set; LightDark actions are continuous"));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seed of episode `index`.
    pub fn episode_seed(&self, index: u32) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
    }
}
