//! Episodic sampling, synthetic tasks, Monte Carlo estimators and the
//! evaluation harness.

mod evaluate;
mod montecarlo;
mod sampling;
mod synthetic;

pub use evaluate::{run_evaluation, run_evaluation_parallel, EvalConfig, FeatureTransform};
pub use montecarlo::{monte_carlo_risk, monte_carlo_risk_batch, verify_cantelli};
pub use sampling::{sample_episode, Episode, EpisodeConfig};
pub use synthetic::{
    gen_gaussian_task, gen_gaussian_task_counted, inject_bias, BiasInjection, SyntheticClass,
    SyntheticTaskSpec,
};
