//! Episode runner, evaluation protocol and result files.
//!
//! Every episode derives independent rng streams (environment, planner,
//! agent belief, evaluation metric) from its seed, so under iteration
//! budgets a `(config, seed)` pair reproduces its record exactly.

mod config;
mod episode;
mod summary;

pub use config::{EnvSpec, PlannerKind, RunConfig};
pub use episode::{run_episode, run_episode_with, run_episodes, EpisodeRecord, StepRecord, TerminalReason};
pub use summary::{
    cvar_ci, mean_ci, paired_cvar_comparison, summaries_to_csv, summarize, EvalSummary, PairedComparison, RunRecords,
    BOOTSTRAP_RESAMPLES, Z95,
};

use crate::error::{IcvarError, Result};

/// Environment variable capping the episode worker pool.
pub const THREADS_ENV: &str = "ICVAR_THREADS";

/// Rayon pool sized by `ICVAR_THREADS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| IcvarError::config(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| IcvarError::Resource(e.to_string()))
}

/// Runs the batch and summarizes it at the planning risk level.
pub fn evaluate_planner(cfg: &RunConfig) -> Result<(RunRecords, EvalSummary)> {
    let records = run_episodes(cfg)?;
    let runs = RunRecords { config: cfg.clone(), records };
    let summary = summarize(&runs, cfg.alpha())?;
    Ok((runs, summary))
}
