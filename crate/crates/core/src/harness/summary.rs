use super::config::RunConfig;
use super::episode::EpisodeRecord;
use crate::cvar::{cvar_of_slice, RiskLevel};
use crate::error::{IcvarError, Result};
use crate::model::substream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Bootstrap resamples used for CVaR intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
const BOOTSTRAP_SEED: u64 = 0x1C7A_2B00;

/// A batch of episodes with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecords {
    pub config: RunConfig,
    pub records: Vec<EpisodeRecord>,
}

impl RunRecords {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_return).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub env: String,
    pub planner: String,
    /// Planning risk level.
    pub planner_alpha: f64,
    /// Risk level of the reported CVaR.
    pub alpha: f64,
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_ci95: f64,
    /// Empirical CVaR of the episode returns (upper tail of cost).
    pub cvar_return: f64,
    /// Half-width of a normal interval with bootstrap standard error.
    pub cvar_ci95: f64,
    /// Mean of the per-episode policy-evaluation ICVaR estimates.
    pub icvar_eval: Option<f64>,
    pub icvar_eval_ci95: Option<f64>,
    pub mean_steps: f64,
    pub terminal_fraction: f64,
    pub mean_simulations_per_step: f64,
}

/// `(mean, 95% normal half-width)`; the half-width is 0 for one sample.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

fn bootstrap_sd(n: usize, stat: impl Fn(&[usize]) -> f64) -> f64 {
    let mut rng = substream(BOOTSTRAP_SEED, n as u64);
    let mut idx = vec![0; n];
    let draws: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            stat(&idx)
        })
        .collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
}

/// Empirical CVaR of `values` with its 95% bootstrap half-width.
pub fn cvar_ci(values: &[f64], alpha: RiskLevel) -> (f64, f64) {
    let point = cvar_of_slice(values, alpha);
    if values.len() < 2 {
        return (point, 0.0);
    }
    let sd = bootstrap_sd(values.len(), |idx| {
        let sample: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        cvar_of_slice(&sample, alpha)
    });
    (point, Z95 * sd)
}

/// Summary of a batch at CVaR level `alpha`.
pub fn summarize(runs: &RunRecords, alpha: RiskLevel) -> Result<EvalSummary> {
    if runs.records.is_empty() {
        return Err(IcvarError::domain("no episodes to summarize"));
    }
    let returns = runs.returns();
    let (mean_return, mean_ci95) = mean_ci(&returns);
    let (cvar_return, cvar_ci95) = cvar_ci(&returns, alpha);
    let evals: Option<Vec<f64>> = runs.records.iter().map(|r| r.icvar_eval).collect();
    let (icvar_eval, icvar_eval_ci95) = match evals {
        Some(v) => {
            let (m, h) = mean_ci(&v);
            (Some(m), Some(h))
        }
        None => (None, None),
    };
    let n = runs.records.len() as f64;
    let total_steps: usize = runs.records.iter().map(|r| r.steps.len()).sum();
    let total_sims: u64 = runs.records.iter().flat_map(|r| &r.steps).map(|s| s.simulations).sum();
    Ok(EvalSummary {
        env: runs.config.env.id().to_string(),
        planner: runs.config.planner.name().to_string(),
        planner_alpha: runs.config.alpha().get(),
        alpha: alpha.get(),
        episodes: runs.records.len(),
        mean_return,
        mean_ci95,
        cvar_return,
        cvar_ci95,
        icvar_eval,
        icvar_eval_ci95,
        mean_steps: total_steps as f64 / n,
        terminal_fraction: runs.records.iter().filter(|r| r.terminal_reason == super::TerminalReason::Terminal).count()
            as f64
            / n,
        mean_simulations_per_step: if total_steps == 0 { 0.0 } else { total_sims as f64 / total_steps as f64 },
    })
}

/// Paired comparison of the return CVaR of two batches run on the same
/// episode seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub baseline_cvar: f64,
    pub candidate_cvar: f64,
    /// `baseline_cvar - candidate_cvar`; positive when the candidate is less risky.
    pub difference: f64,
    /// 95% half-width of the difference from a paired bootstrap.
    pub ci95: f64,
}

impl PairedComparison {
    /// The candidate's CVaR is lower by more than the interval half-width.
    pub fn significant(&self) -> bool {
        self.difference > self.ci95
    }
}

pub fn paired_cvar_comparison(baseline: &RunRecords, candidate: &RunRecords, alpha: RiskLevel) -> Result<PairedComparison> {
    let seeds = |r: &RunRecords| r.records.iter().map(|e| e.seed).collect::<Vec<_>>();
    if seeds(baseline) != seeds(candidate) || baseline.records.is_empty() {
        return Err(IcvarError::domain("paired comparison needs the same non-empty episode seeds"));
    }
    let b = baseline.returns();
    let c = candidate.returns();
    let baseline_cvar = cvar_of_slice(&b, alpha);
    let candidate_cvar = cvar_of_slice(&c, alpha);
    let sd = bootstrap_sd(b.len(), |idx| {
        let bs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let cs: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
        cvar_of_slice(&bs, alpha) - cvar_of_slice(&cs, alpha)
    });
    Ok(PairedComparison { baseline_cvar, candidate_cvar, difference: baseline_cvar - candidate_cvar, ci95: Z95 * sd })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    env: &'a str,
    planner: &'a str,
    planner_alpha: f64,
    alpha: f64,
    episodes: usize,
    mean: f64,
    mean_ci95: f64,
    cvar: f64,
    cvar_ci95: f64,
    icvar_eval: Option<f64>,
    icvar_eval_ci95: Option<f64>,
}

/// RFC-4180 table with one row per summary.
pub fn summaries_to_csv(summaries: &[EvalSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in summaries {
        w.serialize(CsvRow {
            env: &s.env,
            planner: &s.planner,
            planner_alpha: s.planner_alpha,
            alpha: s.alpha,
            episodes: s.episodes,
            mean: s.mean_return,
            mean_ci95: s.mean_ci95,
            cvar: s.cvar_return,
            cvar_ci95: s.cvar_ci95,
            icvar_eval: s.icvar_eval,
            icvar_eval_ci95: s.icvar_eval_ci95,
        })
        .map_err(|e| IcvarError::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| IcvarError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_ci_hand_case() {
        let (m, h) = mean_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        // sample sd sqrt(2), se 1
        assert!((h - Z95).abs() < 1e-12);
    }

    #[test]
    fn cvar_ci_deterministic_and_bounded() {
        let v: Vec<f64> = (0..40).map(|i| (i * 7 % 13) as f64).collect();
        let a = RiskLevel::new(0.1).unwrap();
        assert_eq!(cvar_ci(&v, a), cvar_ci(&v, a));
        assert!(cvar_ci(&v, a).1 > 0.0);
        let (point, _) = cvar_ci(&v, RiskLevel::NEUTRAL);
        assert_eq!(point, v.iter().sum::<f64>() / 40.0);
    }
}
