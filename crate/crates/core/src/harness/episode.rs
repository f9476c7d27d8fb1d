use super::config::{EnvSpec, PlannerKind, RunConfig};
use crate::env::{LaserTag, LightDark, TinyChain};
use crate::error::Result;
use crate::mcts::{PftDpw, PlanOutcome, Pomcpow};
use crate::model::{resample, substream, update_belief, GenerativeModel, ParticleBelief, SimRng};
use crate::sparse::{estimate_v_pi, estimate_v_star, EvalConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Debug;
use std::time::Instant;

const ENV_STREAM: u64 = 0;
const PLAN_STREAM: u64 = 1;
const BELIEF_STREAM: u64 = 2;
const METRIC_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: String,
    /// First 16 hex digits of the SHA-256 of the observation's debug form.
    pub observation_digest: String,
    pub cost: f64,
    pub planning_secs: f64,
    pub simulations: u64,
    /// The planner fell back to a default action.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalReason {
    Terminal,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u32,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub discount: f64,
    /// `sum_t discount^t cost_t`.
    pub total_return: f64,
    pub terminal_reason: TerminalReason,
    /// Planning used a wall-clock budget, so simulation counts may vary
    /// between replays.
    pub wall_clock_budget: bool,
    /// Agent belief updates whose weights collapsed and were reset.
    pub belief_collapses: u32,
    /// Policy-evaluation ICVaR estimate at the initial belief, if requested.
    #[serde(default)]
    pub icvar_eval: Option<f64>,
}

impl EpisodeRecord {
    /// Discounted return recomputed from the step log.
    pub fn recomputed_return(&self) -> f64 {
        discounted(self.steps.iter().map(|s| s.cost), self.discount)
    }
}

fn discounted(costs: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut g = 1.0;
    for c in costs {
        total += g * c;
        g *= gamma;
    }
    total
}

fn digest<T: Debug>(x: &T) -> String {
    let hash = Sha256::digest(format!("{x:?}").as_bytes());
    hex::encode(&hash[..8])
}

/// Picks an action for a belief; the fresh-tree planner used at every step.
fn plan<M: GenerativeModel>(
    cfg: &RunConfig,
    belief: &ParticleBelief<M::State>,
    model: &M,
    rng: &mut SimRng,
) -> Result<PlanOutcome<M::Action>> {
    match cfg.planner {
        PlannerKind::IcvarPftDpw => PftDpw::new(cfg.mcts)?.plan(belief, model, rng),
        PlannerKind::IcvarPomcpow => Pomcpow::new(cfg.mcts)?.plan(belief, model, rng),
        PlannerKind::SparseSampling => {
            let (_, action) = estimate_v_star(belief, 0, &cfg.sparse, model, rng)?;
            Ok(single(action))
        }
        PlannerKind::PolicyEval => Ok(single(model.sample_action(rng))),
    }
}

fn single<A>(action: A) -> PlanOutcome<A> {
    PlanOutcome { action, simulations: 1, root_values: Vec::new(), no_simulations: false, weight_collapses: 0 }
}

fn plan_or_fallback<M: GenerativeModel>(
    cfg: &RunConfig,
    belief: &ParticleBelief<M::State>,
    model: &M,
    rng: &mut SimRng,
) -> PlanOutcome<M::Action> {
    plan(cfg, belief, model, rng).unwrap_or_else(|_| {
        let mut out = single(model.sample_action(rng));
        out.no_simulations = true;
        out
    })
}

/// Runs one episode of `model` under `cfg` with seed `seed`.
pub fn run_episode_with<M: GenerativeModel>(model: &M, cfg: &RunConfig, index: u32, seed: u64) -> EpisodeRecord {
    let mut env_rng = substream(seed, ENV_STREAM);
    let mut plan_rng = substream(seed, PLAN_STREAM);
    let mut belief_rng = substream(seed, BELIEF_STREAM);

    let mut state = model.sample_initial_state(&mut env_rng);
    let mut belief = model.initial_belief(cfg.n_particles, &mut belief_rng);

    let icvar_eval = cfg.eval_icvar.then(|| {
        let eval = EvalConfig { n_b: cfg.eval_n_b, horizon: cfg.eval_horizon, alpha: cfg.alpha(), gamma: model.discount() };
        let policy = |b: &ParticleBelief<M::State>, m: &M, rng: &mut SimRng| plan_or_fallback(cfg, b, m, rng).action;
        estimate_v_pi(&belief, 0, &eval, &policy, model, &mut substream(seed, METRIC_STREAM))
    });

    let mut steps = Vec::new();
    let mut belief_collapses = 0;
    let mut terminal_reason = TerminalReason::MaxSteps;
    for _ in 0..cfg.max_steps {
        if model.is_terminal(&state) {
            terminal_reason = TerminalReason::Terminal;
            break;
        }
        let start = Instant::now();
        let outcome = plan_or_fallback(cfg, &belief, model, &mut plan_rng);
        let planning_secs = start.elapsed().as_secs_f64();

        let tr = model.step(&state, &outcome.action, &mut env_rng);
        steps.push(StepRecord {
            action: format!("{:?}", outcome.action),
            observation_digest: digest(&tr.observation),
            cost: tr.cost,
            planning_secs,
            simulations: outcome.simulations,
            fallback: outcome.no_simulations,
        });

        let (next, collapsed) = update_belief(&belief, &outcome.action, &tr.observation, model, &mut belief_rng);
        belief_collapses += collapsed as u32;
        belief = if cfg.resample_agent_belief { resample(&next, &mut belief_rng) } else { next };
        state = tr.next_state;
    }
    if model.is_terminal(&state) {
        terminal_reason = TerminalReason::Terminal;
    }

    let discount = model.discount();
    EpisodeRecord {
        index,
        seed,
        total_return: discounted(steps.iter().map(|s| s.cost), discount),
        steps,
        discount,
        terminal_reason,
        wall_clock_budget: cfg.mcts.budget.is_wall_clock()
            && matches!(cfg.planner, PlannerKind::IcvarPftDpw | PlannerKind::IcvarPomcpow),
        belief_collapses,
        icvar_eval,
    }
}

fn run_all<M: GenerativeModel>(model: &M, cfg: &RunConfig) -> Vec<EpisodeRecord> {
    let mut records: Vec<_> = (0..cfg.episodes)
        .into_par_iter()
        .map(|i| run_episode_with(model, cfg, i, cfg.episode_seed(i)))
        .collect();
    records.sort_by_key(|r| (r.seed, r.index));
    records
}

/// Runs episode `index` of the configured batch.
pub fn run_episode(cfg: &RunConfig, index: u32) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let seed = cfg.episode_seed(index);
    Ok(match &cfg.env {
        EnvSpec::LaserTag(s) => run_episode_with(&LaserTag::new(s.clone())?, cfg, index, seed),
        EnvSpec::LightDark(s) => run_episode_with(&LightDark::new(s.clone())?, cfg, index, seed),
        EnvSpec::TinyChain(s) => run_episode_with(&TinyChain::new(s.clone())?, cfg, index, seed),
    })
}

/// Runs every episode of the batch on the worker pool; records are sorted
/// by seed.
pub fn run_episodes(cfg: &RunConfig) -> Result<Vec<EpisodeRecord>> {
    cfg.validate()?;
    let pool = super::worker_pool()?;
    pool.install(|| {
        Ok(match &cfg.env {
            EnvSpec::LaserTag(s) => run_all(&LaserTag::new(s.clone())?, cfg),
            EnvSpec::LightDark(s) => run_all(&LightDark::new(s.clone())?, cfg),
            EnvSpec::TinyChain(s) => run_all(&TinyChain::new(s.clone())?, cfg),
        })
    })
}
