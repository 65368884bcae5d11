//! Numerical checks of the one-sided Chebyshev (Cantelli) inequality, the
//! ratio-minimization lemma behind the oracle weights, and the risk bound's
//! validity and optimality.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, MMCVector};
use crate::episodes::{monte_carlo_risk_batch, verify_cantelli};
use crate::error::{Error, Result};
use crate::oracle::{
    bound_lemma_inputs, lemma_min, lemma_objective, minimal_risk_bound, oracle_mmc, risk_upper_bound,
    BinaryTaskStats, OracleConfig,
};
use crate::rng::CounterRng;

/// Absolute slack for comparisons between analytic expressions.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;
/// Relative slack allowed between the grid minimum and the closed form.
pub const GRID_TOLERANCE: f64 = 0.01;
pub const DEFAULT_TRIALS: usize = 100_000;
/// Below this many trials the Monte Carlo margins are too loose to mean much.
pub const RECOMMENDED_MIN_TRIALS: usize = 100_000;

const LEMMA_STREAM: u64 = 1 << 32;
const TASK_STREAM: u64 = 2 << 32;
const OMEGA_STREAM: u64 = 3 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckFamily {
    Cantelli,
    Lemma,
    RiskBound,
}

impl CheckFamily {
    pub const ALL: [CheckFamily; 3] = [CheckFamily::Cantelli, CheckFamily::Lemma, CheckFamily::RiskBound];

    pub fn name(self) -> &'static str {
        match self {
            CheckFamily::Cantelli => "cantelli",
            CheckFamily::Lemma => "lemma",
            CheckFamily::RiskBound => "risk_bound",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheckResult {
    pub family: CheckFamily,
    pub name: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub target: f64,
    pub margin: f64,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub detail: String,
}

impl TheoryCheckResult {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

/// Monte Carlo margin `3 / sqrt(trials)`.
pub fn mc_margin(trials: usize) -> f64 {
    3.0 / (trials as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantelliCase {
    pub mu: f64,
    pub sigma: f64,
    pub k: f64,
}

pub fn default_cantelli_suite() -> Vec<CantelliCase> {
    vec![
        CantelliCase { mu: 0.0, sigma: 1.0, k: 0.5 },
        CantelliCase { mu: 0.0, sigma: 1.0, k: 1.0 },
        CantelliCase { mu: 5.0, sigma: 2.0, k: 2.0 },
        CantelliCase { mu: -3.0, sigma: 0.1, k: 1e-3 },
    ]
}

/// Case `i` draws from seed `seed + i`. Passes iff the empirical tail is at
/// most `1 / (1 + k^2) + 3 / sqrt(trials)`.
pub fn check_cantelli(cases: &[CantelliCase], trials: usize, seed: u64) -> Result<Vec<TheoryCheckResult>> {
    let margin = mc_margin(trials);
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let case_seed = seed.wrapping_add(i as u64);
            let (empirical, bound) = verify_cantelli(c.mu, c.sigma, c.k, trials, case_seed)?;
            Ok(TheoryCheckResult {
                family: CheckFamily::Cantelli,
                name: format!("cantelli mu={} sigma={} k={}", c.mu, c.sigma, c.k),
                status: status(empirical <= bound + margin),
                measured: empirical,
                target: bound,
                margin,
                trials: Some(trials),
                seed: Some(case_seed),
                detail: "P(X - mu >= k sigma) <= 1 / (1 + k^2)".into(),
            })
        })
        .collect()
}

/// Smallest objective value over the simplex grid `{x >= 0, sum x = 1}` with
/// spacing `1 / resolution`. Supports up to three dimensions.
pub fn simplex_grid_min(a: &[f64], b: &[f64], resolution: usize) -> Result<f64> {
    let n = resolution as f64;
    let mut best = f64::INFINITY;
    let mut visit = |x: &[f64]| best = best.min(lemma_objective(a, b, x));
    match a.len() {
        1 => visit(&[1.0]),
        2 => (0..=resolution).for_each(|i| {
            let x = i as f64 / n;
            visit(&[x, 1.0 - x]);
        }),
        3 => {
            for i in 0..=resolution {
                for j in 0..=resolution - i {
                    let (x, y) = (i as f64 / n, j as f64 / n);
                    visit(&[x, y, 1.0 - x - y]);
                }
            }
        }
        d => return Err(Error::Config(format!("grid search supports d <= 3, got {d}"))),
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuite {
    pub instances: usize,
    /// Instance `i` has dimension `dims[i % dims.len()]`.
    pub dims: Vec<usize>,
    pub resolution: usize,
}

impl Default for LemmaSuite {
    fn default() -> Self {
        LemmaSuite {
            instances: 50,
            dims: vec![1, 2, 3],
            resolution: 200,
        }
    }
}

/// Random instances with entries uniform on `[0.1, 10]`. Each passes iff the
/// grid minimum is within 1% of the closed-form minimum, the objective at
/// the closed-form argmin equals it to 1e-12 relative, and the objective is
/// unchanged by scaling its argument by 0.1 and 10.
pub fn check_lemma_min(suite: &LemmaSuite, seed: u64) -> Result<Vec<TheoryCheckResult>> {
    if suite.dims.is_empty() || suite.resolution == 0 {
        return Err(Error::Config("lemma suite needs dimensions and a positive resolution".into()));
    }
    (0..suite.instances)
        .map(|i| {
            let d = suite.dims[i % suite.dims.len()];
            let mut rng = CounterRng::new(seed, LEMMA_STREAM + i as u64);
            let a: Vec<f64> = (0..d).map(|_| rng.uniform(0.1, 10.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.uniform(0.1, 10.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.uniform(0.01, 1.0)).collect();
            let (closed, argmin) = lemma_min(&a, &b)?;
            let grid = simplex_grid_min(&a, &b, suite.resolution)?;

            let rel = |u: f64, v: f64| (u - v).abs() / v.abs();
            let grid_gap = (grid - closed) / closed;
            let at_argmin = rel(lemma_objective(&a, &b, &argmin), closed);
            let f = lemma_objective(&a, &b, &x);
            let scale_gap = [0.1, 10.0]
                .iter()
                .map(|c| {
                    let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
                    rel(lemma_objective(&a, &b, &cx), f)
                })
                .fold(0.0, f64::max);

            let ok = (-GRID_TOLERANCE..=GRID_TOLERANCE).contains(&grid_gap)
                && at_argmin <= 1e-12
                && scale_gap <= 1e-12;
            Ok(TheoryCheckResult {
                family: CheckFamily::Lemma,
                name: format!("lemma instance {i} (d={d})"),
                status: status(ok),
                measured: grid,
                target: closed,
                margin: GRID_TOLERANCE,
                trials: None,
                seed: Some(seed),
                detail: format!(
                    "grid rel gap {grid_gap:.3e}; f(argmin) rel err {at_argmin:.3e}; scale rel err {scale_gap:.3e}"
                ),
            })
        })
        .collect()
}

/// Random diagonal-Gaussian binary tasks satisfying the bound's
/// assumptions: positive means with per-channel gaps of at least 0.05 and
/// standard deviations in `[0.02, 0.6]`. Dimensions are uniform in
/// `1..=max_d`.
pub fn random_binary_tasks(count: usize, max_d: usize, seed: u64) -> Result<Vec<BinaryTaskStats>> {
    if max_d == 0 {
        return Err(Error::Config("max_d must be positive".into()));
    }
    let mut rng = CounterRng::new(seed, TASK_STREAM);
    (0..count)
        .map(|_| {
            let d = 1 + rng.below(max_d as u64) as usize;
            let mut mu1 = Vec::with_capacity(d);
            let mut mu2 = Vec::with_capacity(d);
            for _ in 0..d {
                let m = rng.uniform(0.2, 2.0);
                let gap = rng.uniform(0.05, 1.0);
                let other = if m - gap > 0.05 && rng.next_f64() < 0.5 { m - gap } else { m + gap };
                mu1.push(m);
                mu2.push(other);
            }
            let mut sigma = || (0..d).map(|_| rng.uniform(0.02, 0.6)).collect::<Vec<f64>>();
            let (s1, s2) = (sigma(), sigma());
            BinaryTaskStats::new(ChannelStats::new(mu1, s1)?, ChannelStats::new(mu2, s2)?)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBoundSuite {
    /// Random weight vectors per instance checked against Monte Carlo.
    pub omegas: usize,
    pub trials: usize,
    /// Random weight vectors per instance checked for bound optimality.
    pub optimality_samples: usize,
}

impl Default for RiskBoundSuite {
    fn default() -> Self {
        RiskBoundSuite {
            omegas: 50,
            trials: DEFAULT_TRIALS,
            optimality_samples: 1000,
        }
    }
}

fn random_weights(rng: &mut CounterRng, d: usize) -> MMCVector {
    let log10 = 10f64.ln();
    MMCVector::new((0..d).map(|_| rng.uniform(-log10, log10).exp()).collect()).expect("positive weights")
}

fn relative_direction_gap(w: &MMCVector, direction: &[f64]) -> f64 {
    let squares: Vec<f64> = w.weights().iter().map(|x| x * x).collect();
    let total: f64 = squares.iter().sum();
    squares
        .iter()
        .zip(direction)
        .map(|(s, d)| (s / total - d).abs() / d)
        .fold(0.0, f64::max)
}

/// Three results per instance, or one `Skipped` result when an instance
/// violates the bound's assumptions:
///
/// * bound validity: Monte Carlo risk at most bound plus `3 / sqrt(trials)`
///   for all-ones, the uncapped oracle and `omegas` random weights;
/// * oracle optimality: the bound at the uncapped oracle is at most the
///   bound at `optimality_samples` random weights plus 1e-9;
/// * closed form: the bound at the uncapped oracle equals the lemma's
///   minimum to 1e-9 relative, and the squared oracle weights point along
///   the lemma's argmin.
///
/// Instance `i` draws weights from stream `(seed, 3 * 2^32 + i)` and Monte
/// Carlo samples from seed `seed + i`.
pub fn check_risk_bound(
    instances: &[BinaryTaskStats],
    suite: &RiskBoundSuite,
    seed: u64,
) -> Result<Vec<TheoryCheckResult>> {
    let per_instance: Vec<Result<Vec<TheoryCheckResult>>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, stats)| risk_bound_instance(i, stats, suite, seed))
        .collect();
    let mut out = Vec::new();
    for r in per_instance {
        out.extend(r?);
    }
    Ok(out)
}

fn risk_bound_instance(i: usize, stats: &BinaryTaskStats, suite: &RiskBoundSuite, seed: u64) -> Result<Vec<TheoryCheckResult>> {
    let d = stats.dim();
    let degenerate = stats.degenerate_channels();
    if !degenerate.is_empty() {
        return Ok(vec![TheoryCheckResult {
            family: CheckFamily::RiskBound,
            name: format!("instance {i} (d={d})"),
            status: CheckStatus::Skipped,
            measured: f64::NAN,
            target: f64::NAN,
            margin: f64::NAN,
            trials: None,
            seed: Some(seed),
            detail: format!("assumptions violated on channels {degenerate:?}"),
        }]);
    }
    let mut rng = CounterRng::new(seed, OMEGA_STREAM + i as u64);
    let oracle = oracle_mmc(stats, &OracleConfig::uncapped())?;
    let oracle_bound = risk_upper_bound(&oracle, stats)?;

    let mut tested = vec![MMCVector::ones(d), oracle.clone()];
    tested.extend((0..suite.omegas).map(|_| random_weights(&mut rng, d)));
    let mc_seed = seed.wrapping_add(i as u64);
    let risks = monte_carlo_risk_batch(&tested, stats, suite.trials, mc_seed)?;
    let margin = mc_margin(suite.trials);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_pair = (0.0, 0.0);
    for (w, risk) in tested.iter().zip(&risks) {
        let bound = risk_upper_bound(w, stats)?;
        if risk - bound > worst_excess {
            worst_excess = risk - bound;
            worst_pair = (*risk, bound);
        }
    }
    let validity = TheoryCheckResult {
        family: CheckFamily::RiskBound,
        name: format!("bound validity instance {i} (d={d})"),
        status: status(worst_excess <= margin),
        measured: worst_excess,
        target: 0.0,
        margin,
        trials: Some(suite.trials),
        seed: Some(mc_seed),
        detail: format!(
            "{} weight vectors; tightest: risk {:.4e} vs bound {:.4e}",
            tested.len(),
            worst_pair.0,
            worst_pair.1
        ),
    };

    let mut smallest_gap = f64::INFINITY;
    for _ in 0..suite.optimality_samples {
        let w = random_weights(&mut rng, d);
        smallest_gap = smallest_gap.min(risk_upper_bound(&w, stats)? - oracle_bound);
    }
    let optimality = TheoryCheckResult {
        family: CheckFamily::RiskBound,
        name: format!("oracle optimality instance {i} (d={d})"),
        status: status(smallest_gap >= -ANALYTIC_TOLERANCE),
        measured: smallest_gap,
        target: 0.0,
        margin: ANALYTIC_TOLERANCE,
        trials: None,
        seed: Some(seed),
        detail: format!(
            "min over {} random weights of bound(w) - bound(oracle); bound(oracle) = {oracle_bound:.6e}",
            suite.optimality_samples
        ),
    };

    let closed = minimal_risk_bound(stats)?;
    let (a, b) = bound_lemma_inputs(stats)?;
    let (_, direction) = lemma_min(&a, &b)?;
    let value_gap = (oracle_bound - closed).abs() / closed;
    let direction_gap = relative_direction_gap(&oracle, &direction);
    let closed_form = TheoryCheckResult {
        family: CheckFamily::RiskBound,
        name: format!("closed-form minimum instance {i} (d={d})"),
        status: status(value_gap <= ANALYTIC_TOLERANCE && direction_gap <= ANALYTIC_TOLERANCE),
        measured: oracle_bound,
        target: closed,
        margin: ANALYTIC_TOLERANCE,
        trials: None,
        seed: None,
        detail: format!("value rel err {value_gap:.3e}; direction rel err {direction_gap:.3e}"),
    };
    Ok(vec![validity, optimality, closed_form])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub trials: usize,
    pub cantelli: Vec<CantelliCase>,
    pub lemma: LemmaSuite,
    pub tasks: usize,
    pub max_d: usize,
    pub risk_bound: RiskBoundSuite,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            trials: DEFAULT_TRIALS,
            cantelli: default_cantelli_suite(),
            lemma: LemmaSuite::default(),
            tasks: 20,
            max_d: 8,
            risk_bound: RiskBoundSuite::default(),
        }
    }
}

/// Runs the selected families (all when `only` is empty) in declaration
/// order. `cfg.trials` overrides the Monte Carlo trial counts.
pub fn run_suite(cfg: &SuiteConfig, only: &[CheckFamily]) -> Result<Vec<TheoryCheckResult>> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut out = Vec::new();
    for family in CheckFamily::ALL {
        if !only.is_empty() && !only.contains(&family) {
            continue;
        }
        match family {
            CheckFamily::Cantelli => out.extend(check_cantelli(&cfg.cantelli, cfg.trials, cfg.seed)?),
            CheckFamily::Lemma => out.extend(check_lemma_min(&cfg.lemma, cfg.seed)?),
            CheckFamily::RiskBound => {
                let tasks = random_binary_tasks(cfg.tasks, cfg.max_d, cfg.seed)?;
                let suite = RiskBoundSuite {
                    trials: cfg.trials,
                    ..cfg.risk_bound
                };
                out.extend(check_risk_bound(&tasks, &suite, cfg.seed)?);
            }
        }
    }
    Ok(out)
}

/// Fixed-width text table, one line per result.
pub fn format_table(results: &[TheoryCheckResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<9} {:<44} {:>13} {:>13} {:>10}",
        "status", "family", "check", "measured", "target", "margin"
    );
    for r in results {
        let status = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        let _ = writeln!(
            out,
            "{:<8} {:<9} {:<44} {:>13.6e} {:>13.6e} {:>10.3e}",
            status,
            r.family.name(),
            r.name,
            r.measured,
            r.target,
            r.margin
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn cantelli_suite_passes_near_gaussian_tails() {
        let cases = default_cantelli_suite();
        let results = check_cantelli(&cases, 100_000, 0).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (c, r) in cases.iter().zip(&results) {
            assert!(r.passed(), "{r:?}");
            assert!((r.measured - normal.cdf(-c.k)).abs() < 0.01, "{r:?}");
        }
        assert_eq!(results[1].target, 0.5);
    }

    #[test]
    fn one_dimensional_lemma_is_constant() {
        let (a, b) = ([2.0], [3.0]);
        for x in [0.1, 1.0, 7.0] {
            assert!((lemma_objective(&a, &b, &[x]) - 0.75).abs() < 1e-15);
        }
        assert_eq!(simplex_grid_min(&a, &b, 200).unwrap(), 0.75);
    }

    #[test]
    fn grid_search_hand_instance() {
        let grid = simplex_grid_min(&[1.0, 2.0], &[1.0, 1.0], 200).unwrap();
        assert!((grid - 0.2).abs() <= 0.002);
        assert!(grid >= 0.2 - 1e-15);
        assert!(simplex_grid_min(&[1.0; 4], &[1.0; 4], 10).is_err());
    }

    #[test]
    fn lemma_suite_passes() {
        let suite = LemmaSuite { instances: 12, ..Default::default() };
        let results = check_lemma_min(&suite, 3).unwrap();
        assert_eq!(results.len(), 12);
        assert!(results.iter().all(|r| r.passed()), "{}", format_table(&results));
    }

    #[test]
    fn random_tasks_meet_assumptions() {
        for t in random_binary_tasks(50, 8, 1).unwrap() {
            assert!(t.degenerate_channels().is_empty());
            assert!((1..=8).contains(&t.dim()));
            assert!(t.first.mu().iter().chain(t.second.mu()).all(|&m| m > 0.0));
        }
    }

    #[test]
    fn risk_bound_small_suite_passes_and_is_deterministic() {
        let tasks = random_binary_tasks(3, 4, 5).unwrap();
        let suite = RiskBoundSuite { omegas: 5, trials: 20_000, optimality_samples: 200 };
        let a = check_risk_bound(&tasks, &suite, 5).unwrap();
        assert_eq!(a.len(), 9);
        assert!(a.iter().all(|r| r.passed()), "{}", format_table(&a));
        let b = check_risk_bound(&tasks, &suite, 5).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn degenerate_instance_is_skipped() {
        let s = ChannelStats::new(vec![1.0, 2.0], vec![0.1, 0.1]).unwrap();
        let t = BinaryTaskStats::new(s.clone(), ChannelStats::new(vec![1.0, 3.0], vec![0.1, 0.1]).unwrap()).unwrap();
        let r = check_risk_bound(&[t], &RiskBoundSuite::default(), 0).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].status, CheckStatus::Skipped);
        assert!(r[0].detail.contains("[0]"));
    }

    #[test]
    fn well_separated_instance_matches_gaussian_tail() {
        // Equal sigma in one dimension: risk = P(Z > gap / (2 sigma)).
        let t = BinaryTaskStats::new(
            ChannelStats::new(vec![1.0], vec![0.2]).unwrap(),
            ChannelStats::new(vec![1.6], vec![0.2]).unwrap(),
        )
        .unwrap();
        let trials = 100_000;
        let risk = monte_carlo_risk_batch(&[MMCVector::ones(1)], &t, trials, 4).unwrap()[0];
        let exact = Normal::new(0.0, 1.0).unwrap().cdf(-1.5);
        assert!((risk - exact).abs() < mc_margin(trials), "{risk} vs {exact}");
        assert!(risk <= risk_upper_bound(&MMCVector::ones(1), &t).unwrap());
    }

    #[test]
    fn suite_filter_selects_families() {
        let cfg = SuiteConfig {
            trials: 10_000,
            lemma: LemmaSuite { instances: 2, ..Default::default() },
            ..Default::default()
        };
        let r = run_suite(&cfg, &[CheckFamily::Cantelli]).unwrap();
        assert_eq!(r.len(), cfg.cantelli.len());
        assert!(r.iter().all(|x| x.family == CheckFamily::Cantelli));
    }
}
