//! Empirical conditional value at risk and its concentration radii.
//!
//! Costs are minimized throughout, so CVaR at level `alpha` is the mean of
//! the *upper* `alpha`-tail:
//!
//! ```text
//! C_alpha(Y_1..Y_n) = inf_y { y + 1/(n alpha) * sum_i (Y_i - y)^+ }
//! ```
//!
//! The infimum is attained at the `k = ceil(n alpha)`-th largest sample,
//! which gives an O(n log n) closed form that is exact for non-integer
//! `n alpha` as well (a weighted k-th order statistic rather than a plain
//! top-k mean).

use crate::error::{IcvarError, Result};
use serde::{Deserialize, Serialize};

/// A non-empty collection of finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(IcvarError::domain("sample set is empty"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(IcvarError::domain(format!("non-finite sample {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Risk level `alpha` in (0, 1]. `alpha = 1` is the risk-neutral mean.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub const NEUTRAL: RiskLevel = RiskLevel(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(IcvarError::domain(format!("risk level must lie in (0, 1], got {alpha}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = IcvarError;

    fn try_from(alpha: f64) -> Result<Self> {
        RiskLevel::new(alpha)
    }
}

impl From<RiskLevel> for f64 {
    fn from(r: RiskLevel) -> f64 {
        r.0
    }
}

/// Parameters of the bounded-support concentration inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    delta: f64,
    value_range: f64,
    n: usize,
}

impl ConfidenceParams {
    /// `value_range` is the support width `b - a` of the sampled variable.
    pub fn new(delta: f64, value_range: f64, n: usize) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(IcvarError::domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(value_range >= 0.0 && value_range.is_finite()) {
            return Err(IcvarError::domain(format!("value range must be finite and >= 0, got {value_range}")));
        }
        if n == 0 {
            return Err(IcvarError::domain("sample count must be positive"));
        }
        Ok(Self { delta, value_range, n })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value_range(&self) -> f64 {
        self.value_range
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Empirical CVaR of the upper `alpha`-tail of `samples`.
pub fn empirical_cvar(samples: &SampleSet, alpha: RiskLevel) -> f64 {
    cvar_of_slice(samples.values(), alpha)
}

/// Same as [`empirical_cvar`] on a raw slice. The slice must be non-empty;
/// an empty slice yields 0, the value of an unexpanded node.
pub fn cvar_of_slice(values: &[f64], alpha: RiskLevel) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if alpha.get() == 1.0 {
        return values.iter().sum::<f64>() / n as f64;
    }
    if n == 1 {
        return values[0];
    }
    let n_alpha = n as f64 * alpha.get();
    let k = (n_alpha.ceil() as usize).clamp(1, n);

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));

    let head: f64 = sorted[..k - 1].iter().sum();
    (1.0 - (k - 1) as f64 / n_alpha) * sorted[k - 1] + head / n_alpha
}

/// Empirical CVaR of the multiset in which `values[i]` occurs `counts[i]`
/// times. Agrees with [`cvar_of_slice`] on the expanded multiset without
/// materializing it. Zero-count entries are ignored; an empty multiset
/// yields 0.
pub fn cvar_of_counts(values: &[f64], counts: &[u64], alpha: RiskLevel) -> f64 {
    debug_assert_eq!(values.len(), counts.len());
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    if alpha.get() == 1.0 {
        let total: f64 = values
            .iter()
            .zip(counts)
            .map(|(v, &c)| v * c as f64)
            .sum();
        return total / n as f64;
    }
    let mut pairs: Vec<(f64, u64)> = values
        .iter()
        .copied()
        .zip(counts.iter().copied())
        .filter(|&(_, c)| c > 0)
        .collect();
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));

    let n_alpha = n as f64 * alpha.get();
    let mut remaining = n_alpha;
    let mut acc = 0.0;
    for (v, c) in pairs {
        if remaining <= 0.0 {
            break;
        }
        let take = (c as f64).min(remaining);
        acc += take * v;
        remaining -= take;
    }
    acc / n_alpha
}

/// Upper-side radius: with probability at least `1 - delta`,
/// `CVaR - empirical_cvar <= radius`.
pub fn cvar_upper_radius(p: &ConfidenceParams, alpha: RiskLevel) -> f64 {
    p.value_range * (5.0 * (3.0 / p.delta).ln() / (alpha.get() * p.n as f64)).sqrt()
}

/// Lower-side radius: with probability at least `1 - delta`,
/// `CVaR - empirical_cvar >= -radius`.
pub fn cvar_lower_radius(p: &ConfidenceParams, alpha: RiskLevel) -> f64 {
    (p.value_range / alpha.get()) * ((1.0 / p.delta).ln() / (2.0 * p.n as f64)).sqrt()
}

/// Deterministic sandwich on the difference of two empirical CVaRs computed
/// from paired samples of equal length:
///
/// `lower <= cvar(x) - cvar(y) <= upper`.
pub fn empirical_cvar_difference_bounds(
    x: &SampleSet,
    y: &SampleSet,
    alpha: RiskLevel,
) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(IcvarError::domain(format!(
            "paired samples must have equal length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let scale = 1.0 / (x.len() as f64 * alpha.get());
    let (mut up, mut down) = (0.0, 0.0);
    for (&xi, &yi) in x.values().iter().zip(y.values()) {
        up += (xi - yi).max(0.0);
        down += (yi - xi).max(0.0);
    }
    Ok((-scale * down, scale * up))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[f64]) -> SampleSet {
        SampleSet::new(v.to_vec()).unwrap()
    }

    fn alpha(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    #[test]
    fn alpha_one_is_mean() {
        assert_eq!(empirical_cvar(&set(&[1.0, 2.0, 3.0]), RiskLevel::NEUTRAL), 2.0);
    }

    #[test]
    fn integer_tail_is_top_mean() {
        let v = empirical_cvar(&set(&[1.0, 2.0, 3.0, 4.0, 5.0]), alpha(0.4));
        assert!((v - 4.5).abs() < 1e-12);
    }

    #[test]
    fn fractional_tail_weights_kth_largest() {
        let v = empirical_cvar(&set(&[1.0, 2.0, 3.0, 4.0]), alpha(0.3));
        assert!((v - 23.0 / 6.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ties_need_no_tie_breaking() {
        assert_eq!(empirical_cvar(&set(&[7.0; 9]), alpha(0.2)), 7.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SampleSet::new(vec![]).is_err());
        assert!(SampleSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.5).is_err());
        assert!(ConfidenceParams::new(1.0, 1.0, 3).is_err());
        assert!(ConfidenceParams::new(0.1, -1.0, 3).is_err());
        assert!(ConfidenceParams::new(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn radii_closed_forms() {
        let zero = ConfidenceParams::new(0.3, 0.0, 10).unwrap();
        assert_eq!(cvar_upper_radius(&zero, alpha(0.5)), 0.0);
        assert_eq!(cvar_lower_radius(&zero, alpha(0.5)), 0.0);

        // ln(3 / delta) = 2, so the radius is sqrt(5 * 2 / 10) = 1
        let e2 = std::f64::consts::E * std::f64::consts::E;
        let p = ConfidenceParams::new(3.0 / e2, 1.0, 10).unwrap();
        assert!((cvar_upper_radius(&p, RiskLevel::NEUTRAL) - 1.0).abs() < 1e-12);

        let p = ConfidenceParams::new(1.0 / std::f64::consts::E, 1.0, 2).unwrap();
        assert!((cvar_lower_radius(&p, RiskLevel::NEUTRAL) - 0.5).abs() < 1e-12);
        let r1 = cvar_lower_radius(&p, alpha(0.4));
        let r2 = cvar_lower_radius(&p, alpha(0.2));
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn upper_radius_decreases_in_n() {
        let mut prev = f64::INFINITY;
        for n in 1..50 {
            let r = cvar_upper_radius(&ConfidenceParams::new(0.1, 2.0, n).unwrap(), alpha(0.3));
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn difference_bounds_examples() {
        let x = set(&[2.0, 2.0]);
        let y = set(&[1.0, 1.0]);
        assert_eq!(empirical_cvar_difference_bounds(&x, &y, RiskLevel::NEUTRAL).unwrap(), (0.0, 1.0));
        assert_eq!(empirical_cvar_difference_bounds(&x, &x, alpha(0.3)).unwrap(), (0.0, 0.0));
        assert!(empirical_cvar_difference_bounds(&x, &set(&[1.0]), alpha(0.3)).is_err());
    }

    #[test]
    fn risk_level_serde_validates() {
        let r: RiskLevel = serde_json::from_str("0.25").unwrap();
        assert_eq!(r.get(), 0.25);
        assert!(serde_json::from_str::<RiskLevel>("0").is_err());
    }

    #[test]
    fn counts_match_expanded_multiset() {
        let values = [3.0, -1.0, 7.5, 0.25];
        let counts = [2u64, 0, 3, 1];
        let expanded: Vec<f64> = values
            .iter()
            .zip(counts)
            .flat_map(|(&v, c)| std::iter::repeat_n(v, c as usize))
            .collect();
        for a in [0.05, 0.1, 1.0 / 3.0, 0.5, 0.9, 1.0] {
            let lhs = cvar_of_counts(&values, &counts, alpha(a));
            let rhs = cvar_of_slice(&expanded, alpha(a));
            assert!((lhs - rhs).abs() < 1e-12, "alpha {a}: {lhs} vs {rhs}");
        }
        assert_eq!(cvar_of_counts(&[1.0], &[0], alpha(0.5)), 0.0);
    }
}
