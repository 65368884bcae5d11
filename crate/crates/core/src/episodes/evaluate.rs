use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_episode, EpisodeConfig};
use crate::classify::{linear_fit, linear_predict, ncc_fit, ncc_predict, ClassifierKind, LinearConfig};
use crate::data::{ChannelStats, EmbeddingDataset, FeatureVector};
use crate::error::{check_dim, Error, Result};
use crate::oracle::{apply_oracle, class_stats, oracle_mmc, original_mmc, BinaryTaskStats, OracleConfig};
use crate::report::EvalReport;
use crate::transforms::{Transform, TransformSpec};

/// What is done to every support and query feature before classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTransform {
    Channelwise(TransformSpec),
    /// Oracle re-weighting from full-dataset class statistics (binary
    /// episodes only).
    Oracle,
    /// Fixed per-channel multipliers.
    ChannelWeights(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub episodes: EpisodeConfig,
    pub transform: FeatureTransform,
    pub classifier: ClassifierKind,
    pub linear: LinearConfig,
    pub oracle: OracleConfig,
}

impl EvalConfig {
    pub fn new(episodes: EpisodeConfig, transform: FeatureTransform, classifier: ClassifierKind) -> Self {
        EvalConfig {
            episodes,
            transform,
            classifier,
            linear: LinearConfig::default(),
            oracle: OracleConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.episodes.validate()?;
        match &self.transform {
            FeatureTransform::Channelwise(spec) => spec.validate()?,
            FeatureTransform::Oracle => {
                if self.episodes.n_way != 2 {
                    return Err(Error::Config(format!(
                        "the oracle transform is defined for 2-way episodes only (got n_way = {})",
                        self.episodes.n_way
                    )));
                }
                self.oracle.validate()?;
            }
            FeatureTransform::ChannelWeights(w) => {
                if let Some(l) = w.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::Config(format!("channel weight {l} must be positive, got {}", w[l])));
                }
            }
        }
        if self.classifier == ClassifierKind::Lc {
            self.linear.validate()?;
        }
        Ok(())
    }
}

enum Prepared {
    Channelwise(Transform),
    Oracle(Vec<ChannelStats>),
    Weights(Vec<f64>),
}

impl Prepared {
    fn new(dataset: &EmbeddingDataset, cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match &cfg.transform {
            FeatureTransform::Channelwise(spec) => Prepared::Channelwise(Transform::new(spec.clone())?),
            FeatureTransform::Oracle => Prepared::Oracle(
                dataset
                    .classes()
                    .iter()
                    .map(|c| class_stats(&c.vectors))
                    .collect::<Result<_>>()?,
            ),
            FeatureTransform::ChannelWeights(w) => {
                check_dim(dataset.dimensionality(), w.len())?;
                Prepared::Weights(w.clone())
            }
        })
    }
}

fn map_groups<F>(groups: &mut [Vec<FeatureVector>], mut f: F) -> Result<()>
where
    F: FnMut(&FeatureVector) -> Result<FeatureVector>,
{
    for group in groups {
        for v in group.iter_mut() {
            *v = f(v)?;
        }
    }
    Ok(())
}

fn evaluate_episode(dataset: &EmbeddingDataset, cfg: &EvalConfig, prepared: &Prepared, index: u64) -> Result<f64> {
    let mut episode = sample_episode(dataset, &cfg.episodes, index)?;
    match prepared {
        Prepared::Channelwise(t) => {
            map_groups(&mut episode.support, |v| t.apply(v))?;
            map_groups(&mut episode.query, |v| t.apply(v))?;
        }
        Prepared::Oracle(stats) => {
            let task = BinaryTaskStats::new(
                stats[episode.classes[0]].clone(),
                stats[episode.classes[1]].clone(),
            )?;
            let original = original_mmc(&task, cfg.oracle.epsilon);
            let weights = oracle_mmc(&task, &cfg.oracle)?;
            map_groups(&mut episode.support, |v| apply_oracle(v, &weights, &original))?;
            map_groups(&mut episode.query, |v| apply_oracle(v, &weights, &original))?;
        }
        Prepared::Weights(w) => {
            let scale = |v: &FeatureVector| FeatureVector::new(v.iter().zip(w).map(|(x, s)| x * s).collect());
            map_groups(&mut episode.support, scale)?;
            map_groups(&mut episode.query, scale)?;
        }
    }

    let mut correct = 0usize;
    let mut total = 0usize;
    let mut score = |predict: &dyn Fn(&FeatureVector) -> Result<usize>| -> Result<()> {
        for (truth, group) in episode.query.iter().enumerate() {
            for v in group {
                correct += usize::from(predict(v)? == truth);
                total += 1;
            }
        }
        Ok(())
    };
    match cfg.classifier {
        ClassifierKind::Ncc => {
            let model = ncc_fit(&episode.support)?;
            score(&|v| ncc_predict(v, &model))?;
        }
        ClassifierKind::Lc => {
            let model = linear_fit(&episode.support, &cfg.linear)?;
            score(&|v| linear_predict(v, &model))?;
        }
    }
    Ok(correct as f64 / total as f64)
}

fn wrap(index: usize) -> impl FnOnce(Error) -> Error {
    move |e| Error::Episode {
        index: index as u64,
        source: Box::new(e),
    }
}

/// Runs every episode in index order on the calling thread.
pub fn run_evaluation(dataset: &EmbeddingDataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let prepared = Prepared::new(dataset, cfg)?;
    let accuracies = (0..cfg.episodes.episodes)
        .map(|e| evaluate_episode(dataset, cfg, &prepared, e as u64).map_err(wrap(e)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::from_accuracies(accuracies, cfg.clone()))
}

/// Same report as [`run_evaluation`], with episodes spread over `threads`
/// workers. On failure the error of the lowest failing episode is returned.
pub fn run_evaluation_parallel(dataset: &EmbeddingDataset, cfg: &EvalConfig, threads: usize) -> Result<EvalReport> {
    if threads <= 1 {
        return run_evaluation(dataset, cfg);
    }
    let prepared = Prepared::new(dataset, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let results: Vec<Result<f64>> = pool.install(|| {
        (0..cfg.episodes.episodes)
            .into_par_iter()
            .map(|e| evaluate_episode(dataset, cfg, &prepared, e as u64).map_err(wrap(e)))
            .collect()
    });
    let accuracies = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EvalReport::from_accuracies(accuracies, cfg.clone()))
}
