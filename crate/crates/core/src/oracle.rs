//! Oracle channel importance for binary tasks.
//!
//! Features are first standardized by the task's original MMC
//! `w_o = (mu1 + mu2) / 2`, so both class means average to one on every
//! channel. Re-weighting the standardized channels by `w` and classifying by
//! nearest (true) centroid has a misclassification rate bounded by
//!
//! ```text
//! 8 * sum_l w_l^4 (s1_l + s2_l)^2 / (sum_l w_l^2 (m1_l - m2_l)^2)^2
//! ```
//!
//! with `m`, `s` the standardized means and standard deviations. The bound
//! is minimized by `w_l ∝ |mu1_l - mu2_l| / (sigma1_l + sigma2_l)`.

use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, FeatureVector, MMCVector};
use crate::error::{check_dim, Error, Result};

pub const DEFAULT_ALPHA: f64 = 50.0;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryTaskStats {
    pub first: ChannelStats,
    pub second: ChannelStats,
}

impl BinaryTaskStats {
    pub fn new(first: ChannelStats, second: ChannelStats) -> Result<Self> {
        check_dim(first.dim(), second.dim())?;
        Ok(BinaryTaskStats { first, second })
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    /// Channels violating `mu1 != mu2` or `sigma1 + sigma2 > 0`.
    pub fn degenerate_channels(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&l| {
                self.first.mu()[l] == self.second.mu()[l]
                    || self.first.sigma()[l] + self.second.sigma()[l] <= 0.0
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest allowed ratio of oracle to original MMC on a channel.
    pub alpha: f64,
    /// Floor for original MMC and threshold for degenerate channels.
    pub epsilon: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl OracleConfig {
    /// No ratio cap; the result is the exact bound minimizer on
    /// non-degenerate tasks.
    pub fn uncapped() -> Self {
        OracleConfig {
            alpha: f64::INFINITY,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(Error::Config(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-channel mean and population standard deviation.
pub fn class_stats(vectors: &[FeatureVector]) -> Result<ChannelStats> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Validation("class statistics need at least one vector".into()))?;
    let d = first.len();
    let n = vectors.len() as f64;
    let mut mu = vec![0.0; d];
    for v in vectors {
        check_dim(d, v.len())?;
        for (m, x) in mu.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(v.iter()).zip(&mu) {
            *s += (x - m) * (x - m);
        }
    }
    let sigma = var.into_iter().map(|s| (s / n).sqrt()).collect();
    ChannelStats::new(mu, sigma)
}

/// `(mu1 + mu2) / 2`, floored at `epsilon`.
pub fn original_mmc(stats: &BinaryTaskStats, epsilon: f64) -> MMCVector {
    let weights = stats
        .first
        .mu()
        .iter()
        .zip(stats.second.mu())
        .map(|(a, b)| (0.5 * (a + b)).max(epsilon))
        .collect();
    MMCVector::new(weights).expect("floored means are positive and finite")
}

fn check_positive_weights(original: &MMCVector) -> Result<()> {
    if let Some(l) = original.weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::Domain(format!("original MMC is zero on channel {l}; cannot standardize")));
    }
    Ok(())
}

/// Divides each channel by the original MMC.
pub fn standardize(v: &FeatureVector, original: &MMCVector) -> Result<FeatureVector> {
    check_dim(original.dim(), v.len())?;
    check_positive_weights(original)?;
    FeatureVector::new(v.iter().zip(original.weights()).map(|(x, w)| x / w).collect())
}

pub fn standardize_stats(stats: &ChannelStats, original: &MMCVector) -> Result<ChannelStats> {
    check_dim(original.dim(), stats.dim())?;
    check_positive_weights(original)?;
    let w = original.weights();
    ChannelStats::new(
        stats.mu().iter().zip(w).map(|(m, w)| m / w).collect(),
        stats.sigma().iter().zip(w).map(|(s, w)| s / w).collect(),
    )
}

/// Oracle MMC with the ratio cap.
///
/// Raw weights `|mu1 - mu2| / (sigma1 + sigma2)` are rescaled so that, together
/// with degenerate channels (which keep their original MMC), they sum to the
/// total original MMC. Any channel whose weight then exceeds `alpha` times its
/// original MMC is reset to the original MMC.
pub fn oracle_mmc(stats: &BinaryTaskStats, cfg: &OracleConfig) -> Result<MMCVector> {
    cfg.validate()?;
    let original = original_mmc(stats, cfg.epsilon);
    let w_o = original.weights();
    let d = stats.dim();

    let raw: Vec<Option<f64>> = (0..d)
        .map(|l| {
            let gap = (stats.first.mu()[l] - stats.second.mu()[l]).abs();
            let spread = stats.first.sigma()[l] + stats.second.sigma()[l];
            if gap < cfg.epsilon || spread < cfg.epsilon {
                None
            } else {
                Some(gap / spread)
            }
        })
        .collect();

    let raw_total: f64 = raw.iter().flatten().sum();
    let target_total: f64 = raw
        .iter()
        .zip(w_o)
        .filter(|(r, _)| r.is_some())
        .map(|(_, w)| w)
        .sum();
    let scale = if raw_total > 0.0 { target_total / raw_total } else { 0.0 };

    let weights = raw
        .iter()
        .zip(w_o)
        .map(|(r, &wo)| match r {
            Some(r) => {
                let w = r * scale;
                if w / wo > cfg.alpha {
                    wo
                } else {
                    w
                }
            }
            None => wo,
        })
        .collect();
    MMCVector::new(weights)
}

/// `weights ⊙ standardize(v, original)`.
pub fn apply_oracle(v: &FeatureVector, weights: &MMCVector, original: &MMCVector) -> Result<FeatureVector> {
    check_dim(weights.dim(), v.len())?;
    let standardized = standardize(v, original)?;
    FeatureVector::new(
        standardized
            .iter()
            .zip(weights.weights())
            .map(|(x, w)| x * w)
            .collect(),
    )
}

/// Misclassification-rate upper bound of weighted nearest-centroid
/// classification, evaluated for channel weights `weights`.
pub fn risk_upper_bound(weights: &MMCVector, stats: &BinaryTaskStats) -> Result<f64> {
    check_dim(stats.dim(), weights.dim())?;
    let bad = stats.degenerate_channels();
    if !bad.is_empty() {
        return Err(Error::Domain(format!(
            "bound needs mu1 != mu2 and sigma1 + sigma2 > 0 on every channel; violated on {bad:?}"
        )));
    }
    if weights.weights().iter().all(|&w| w == 0.0) {
        return Err(Error::Domain("weights are all zero".into()));
    }
    let (numerator, denominator) = bound_terms(weights.weights(), stats, DEFAULT_EPSILON);
    Ok(8.0 * numerator / (denominator * denominator))
}

fn bound_terms(w: &[f64], stats: &BinaryTaskStats, epsilon: f64) -> (f64, f64) {
    let original = original_mmc(stats, epsilon);
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for l in 0..w.len() {
        let wo = original.weights()[l];
        let gap = (stats.first.mu()[l] - stats.second.mu()[l]) / wo;
        let spread = (stats.first.sigma()[l] + stats.second.sigma()[l]) / wo;
        let w2 = w[l] * w[l];
        numerator += w2 * w2 * spread * spread;
        denominator += w2 * gap * gap;
    }
    (numerator, denominator)
}

/// Closed-form minimum of the bound: `8 / sum_l gap_l^4 / spread_l^2` over
/// standardized gaps and spreads.
pub fn minimal_risk_bound(stats: &BinaryTaskStats) -> Result<f64> {
    let (a, b) = bound_lemma_inputs(stats)?;
    Ok(8.0 * lemma_min(&a, &b)?.0)
}

/// `a_l = (m1_l - m2_l)^2`, `b_l = (s1_l + s2_l)^2` on standardized stats,
/// the inputs for which the bound equals `8 f(w^2)` with `f` from
/// [`lemma_objective`].
pub fn bound_lemma_inputs(stats: &BinaryTaskStats) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = stats.degenerate_channels();
    if !bad.is_empty() {
        return Err(Error::Domain(format!("degenerate channels {bad:?}")));
    }
    let original = original_mmc(stats, DEFAULT_EPSILON);
    let first = standardize_stats(&stats.first, &original)?;
    let second = standardize_stats(&stats.second, &original)?;
    let a = first.mu().iter().zip(second.mu()).map(|(x, y)| (x - y).powi(2)).collect();
    let b = first
        .sigma()
        .iter()
        .zip(second.sigma())
        .map(|(x, y)| (x + y).powi(2))
        .collect();
    Ok((a, b))
}

/// `f(x) = sum_i b_i x_i^2 / (sum_i a_i x_i)^2`.
pub fn lemma_objective(a: &[f64], b: &[f64], x: &[f64]) -> f64 {
    let num: f64 = b.iter().zip(x).map(|(b, x)| b * x * x).sum();
    let den: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
    num / (den * den)
}

/// Minimum of [`lemma_objective`] over the non-negative orthant minus the
/// origin: value `1 / sum_i a_i^2 / b_i`, reached along `x_i ∝ a_i / b_i`
/// (returned l1-normalized).
pub fn lemma_min(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::Domain("empty input".into()));
    }
    if let Some(i) = a.iter().chain(b).position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "entries must be positive and finite (offending index {})",
            i % a.len()
        )));
    }
    let total: f64 = a.iter().zip(b).map(|(a, b)| a * a / b).sum();
    let direction: Vec<f64> = a.iter().zip(b).map(|(a, b)| a / b).collect();
    let norm: f64 = direction.iter().sum();
    Ok((1.0 / total, direction.into_iter().map(|x| x / norm).collect()))
}
