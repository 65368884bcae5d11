use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDataset, FeatureVector};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_way: 5,
            k_shot: 5,
            m_query: 15,
            episodes: 10_000,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_way", self.n_way),
            ("k_shot", self.k_shot),
            ("m_query", self.m_query),
            ("episodes", self.episodes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn per_class(&self) -> usize {
        self.k_shot + self.m_query
    }
}

/// One N-way K-shot task. Group `i` of support and query belongs to dataset
/// class `classes[i]`; `support_rows`/`query_rows` hold the source row
/// indices within that class.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    pub m_query: usize,
    pub classes: Vec<usize>,
    pub support: Vec<Vec<FeatureVector>>,
    pub query: Vec<Vec<FeatureVector>>,
    pub support_rows: Vec<Vec<usize>>,
    pub query_rows: Vec<Vec<usize>>,
}

/// Samples episode `episode_index` from the stream `(cfg.seed, episode_index)`.
///
/// Classes holding fewer than `k_shot + m_query` vectors are never drawn.
/// The N classes are drawn without replacement from the eligible ones (in
/// dataset order), then for each drawn class `k_shot + m_query` distinct
/// rows: the first `k_shot` form the support, the rest the query.
pub fn sample_episode(dataset: &EmbeddingDataset, cfg: &EpisodeConfig, episode_index: u64) -> Result<Episode> {
    cfg.validate()?;
    let needed = cfg.per_class();
    let eligible: Vec<usize> = dataset
        .classes()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.vectors.len() >= needed)
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < cfg.n_way {
        return Err(Error::Config(format!(
            "{}-way episodes need {} classes with at least {needed} vectors each; the dataset has {}",
            cfg.n_way,
            cfg.n_way,
            eligible.len()
        )));
    }
    let mut rng = CounterRng::new(cfg.seed, episode_index);
    let picks = rng.sample_without_replacement(eligible.len(), cfg.n_way);
    let mut episode = Episode {
        n_way: cfg.n_way,
        k_shot: cfg.k_shot,
        m_query: cfg.m_query,
        classes: Vec::with_capacity(cfg.n_way),
        support: Vec::with_capacity(cfg.n_way),
        query: Vec::with_capacity(cfg.n_way),
        support_rows: Vec::with_capacity(cfg.n_way),
        query_rows: Vec::with_capacity(cfg.n_way),
    };
    for pick in picks {
        let class = eligible[pick];
        let vectors = &dataset.classes()[class].vectors;
        let mut rows = rng.sample_without_replacement(vectors.len(), needed);
        let query_rows = rows.split_off(cfg.k_shot);
        episode.classes.push(class);
        episode.support.push(rows.iter().map(|&r| vectors[r].clone()).collect());
        episode.query.push(query_rows.iter().map(|&r| vectors[r].clone()).collect());
        episode.support_rows.push(rows);
        episode.query_rows.push(query_rows);
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassSamples;
    use std::collections::HashSet;

    fn dataset(classes: usize, per_class: usize) -> EmbeddingDataset {
        let classes = (0..classes)
            .map(|c| ClassSamples {
                name: format!("class{c}"),
                vectors: (0..per_class)
                    .map(|i| FeatureVector::new(vec![c as f64, i as f64]).unwrap())
                    .collect(),
            })
            .collect();
        EmbeddingDataset::new(2, classes).unwrap()
    }

    fn cfg(n: usize, k: usize, m: usize) -> EpisodeConfig {
        EpisodeConfig { n_way: n, k_shot: k, m_query: m, episodes: 1, seed: 17 }
    }

    #[test]
    fn same_index_same_episode() {
        let ds = dataset(10, 30);
        let c = cfg(5, 5, 15);
        assert_eq!(sample_episode(&ds, &c, 3).unwrap(), sample_episode(&ds, &c, 3).unwrap());
        assert_ne!(sample_episode(&ds, &c, 3).unwrap(), sample_episode(&ds, &c, 4).unwrap());
    }

    #[test]
    fn structure_and_disjointness() {
        let ds = dataset(8, 25);
        let e = sample_episode(&ds, &cfg(4, 3, 7), 0).unwrap();
        assert_eq!(e.classes.iter().collect::<HashSet<_>>().len(), 4);
        for i in 0..4 {
            assert_eq!(e.support[i].len(), 3);
            assert_eq!(e.query[i].len(), 7);
            let s: HashSet<_> = e.support_rows[i].iter().collect();
            assert!(e.query_rows[i].iter().all(|r| !s.contains(r)));
            for v in &e.support[i] {
                assert_eq!(v[0], e.classes[i] as f64);
            }
        }
    }

    #[test]
    fn exhaustion_uses_every_vector() {
        let ds = dataset(3, 6);
        let e = sample_episode(&ds, &cfg(3, 2, 4), 9).unwrap();
        let mut seen: Vec<(usize, usize)> = Vec::new();
        for i in 0..3 {
            for &r in e.support_rows[i].iter().chain(&e.query_rows[i]) {
                seen.push((e.classes[i], r));
            }
        }
        seen.sort_unstable();
        let all: Vec<(usize, usize)> = (0..3).flat_map(|c| (0..6).map(move |r| (c, r))).collect();
        assert_eq!(seen, all);
    }

    #[test]
    fn insufficient_data_is_a_config_error() {
        let ds = dataset(4, 10);
        assert!(matches!(sample_episode(&ds, &cfg(5, 1, 1), 0), Err(Error::Config(_))));
        assert!(matches!(sample_episode(&ds, &cfg(2, 5, 6), 0), Err(Error::Config(_))));
    }

    #[test]
    fn class_frequency_matches_hypergeometric_expectation() {
        let ds = dataset(10, 3);
        let c = cfg(5, 1, 1);
        let mut counts = [0usize; 10];
        let episodes = 10_000;
        for e in 0..episodes {
            for &class in &sample_episode(&ds, &c, e).unwrap().classes {
                counts[class] += 1;
            }
        }
        // each class is drawn with probability 5/10
        for &n in &counts {
            let freq = n as f64 / episodes as f64;
            assert!((freq - 0.5).abs() <= 0.02, "{counts:?}");
        }
    }
}
