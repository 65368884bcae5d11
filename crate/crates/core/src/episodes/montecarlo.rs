use crate::classify::{weighted_compare, BinaryLabel};
use crate::data::{ChannelStats, MMCVector};
use crate::error::{check_dim, Error, Result};
use crate::oracle::{original_mmc, standardize_stats, BinaryTaskStats, DEFAULT_EPSILON};
use crate::rng::CounterRng;

/// Empirical misclassification rate of weighted nearest-centroid
/// classification on two diagonal Gaussian classes.
///
/// `trials` samples are drawn from each class (unclipped), standardized by
/// the task's original MMC and compared against the standardized true
/// means. Class one reads stream `(seed, 0)`, class two `(seed, 1)`.
pub fn monte_carlo_risk(weights: &MMCVector, stats: &BinaryTaskStats, trials: usize, seed: u64) -> Result<f64> {
    Ok(monte_carlo_risk_batch(std::slice::from_ref(weights), stats, trials, seed)?[0])
}

/// [`monte_carlo_risk`] for several weight vectors on one shared set of
/// samples; entry `i` equals `monte_carlo_risk(&weights[i], ..)`.
pub fn monte_carlo_risk_batch(
    weights: &[MMCVector],
    stats: &BinaryTaskStats,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let d = stats.dim();
    for w in weights {
        check_dim(d, w.dim())?;
    }
    let original = original_mmc(stats, DEFAULT_EPSILON);
    let first = standardize_stats(&stats.first, &original)?;
    let second = standardize_stats(&stats.second, &original)?;

    let mut errors = vec![0usize; weights.len()];
    let mut sample = vec![0.0; d];
    for (stream, (own, truth)) in [(&first, BinaryLabel::First), (&second, BinaryLabel::Second)]
        .into_iter()
        .enumerate()
    {
        let mut rng = CounterRng::new(seed, stream as u64);
        for _ in 0..trials {
            draw(&mut rng, own, &mut sample);
            for (w, err) in weights.iter().zip(errors.iter_mut()) {
                if weighted_compare(&sample, first.mu(), second.mu(), w.weights()) != truth {
                    *err += 1;
                }
            }
        }
    }
    let total = (2 * trials) as f64;
    Ok(errors.into_iter().map(|e| e as f64 / total).collect())
}

fn draw(rng: &mut CounterRng, stats: &ChannelStats, out: &mut [f64]) {
    for ((x, m), s) in out.iter_mut().zip(stats.mu()).zip(stats.sigma()) {
        *x = m + s * rng.standard_normal();
    }
}

/// Fraction of `N(mu, sigma^2)` draws with `X - mu >= k sigma`, alongside the
/// one-sided Chebyshev bound `1 / (1 + k^2)`. Reads stream `(seed, 0)`.
pub fn verify_cantelli(mu: f64, sigma: f64, k: f64, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if !(sigma > 0.0 && sigma.is_finite()) || !(k > 0.0 && k.is_finite()) || !mu.is_finite() {
        return Err(Error::Config(format!(
            "need finite mu, sigma > 0 and k > 0 (got mu={mu}, sigma={sigma}, k={k})"
        )));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut rng = CounterRng::new(seed, 0);
    let hits = (0..trials)
        .filter(|_| rng.normal(mu, sigma) - mu >= k * sigma)
        .count();
    Ok((hits as f64 / trials as f64, 1.0 / (1.0 + k * k)))
}
