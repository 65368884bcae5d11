use serde::{Deserialize, Serialize};

use crate::data::{ClassSamples, EmbeddingDataset, FeatureVector};
use crate::error::{check_dim, Error, Result};
use crate::rng::CounterRng;

/// Stream reserved for drawing random task specifications.
const SPEC_STREAM: u64 = u64::MAX;
/// Stream reserved for drawing random bias scales.
const BIAS_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Independent-channel Gaussian classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub d: usize,
    pub classes: Vec<SyntheticClass>,
    /// Require `mean >= 4 * std` on every channel, so clipping at zero is rare.
    pub margin_rule: bool,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.classes.is_empty() {
            return Err(Error::Config("synthetic task needs d > 0 and at least one class".into()));
        }
        for class in &self.classes {
            check_dim(self.d, class.mean.len())?;
            check_dim(self.d, class.std.len())?;
            for l in 0..self.d {
                let (m, s) = (class.mean[l], class.std[l]);
                if !m.is_finite() || !s.is_finite() || s < 0.0 {
                    return Err(Error::Config(format!(
                        "class {:?} channel {l}: mean {m} / std {s} invalid",
                        class.name
                    )));
                }
                if self.margin_rule && m < 4.0 * s {
                    return Err(Error::Config(format!(
                        "class {:?} channel {l}: mean {m} < 4 * std {s} violates the margin rule",
                        class.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Random class means `base_mean * (1 + relative_spread * U(-1, 1))` per
    /// class and channel, all with standard deviation `std`.
    pub fn random(
        classes: usize,
        d: usize,
        base_mean: f64,
        relative_spread: f64,
        std: f64,
        margin_rule: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = CounterRng::new(seed, SPEC_STREAM);
        let classes = (0..classes)
            .map(|c| SyntheticClass {
                name: format!("class{c:03}"),
                mean: (0..d)
                    .map(|_| base_mean * (1.0 + relative_spread * rng.uniform(-1.0, 1.0)))
                    .collect(),
                std: vec![std; d],
            })
            .collect();
        let spec = SyntheticTaskSpec { d, classes, margin_rule };
        spec.validate()?;
        Ok(spec)
    }
}

/// Like [`gen_gaussian_task`], also returning `(clipped draws, total draws)`.
///
/// Class `c` reads stream `(seed, c)`; samples are drawn row by row, channel
/// by channel, as `mean + std * z` and clipped at zero.
pub fn gen_gaussian_task_counted(
    spec: &SyntheticTaskSpec,
    n_per_class: usize,
    seed: u64,
) -> Result<(EmbeddingDataset, usize, usize)> {
    spec.validate()?;
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be positive".into()));
    }
    let mut clipped = 0;
    let mut classes = Vec::with_capacity(spec.classes.len());
    for (c, class) in spec.classes.iter().enumerate() {
        let mut rng = CounterRng::new(seed, c as u64);
        let vectors = (0..n_per_class)
            .map(|_| {
                let values = class
                    .mean
                    .iter()
                    .zip(&class.std)
                    .map(|(&m, &s)| {
                        let x = rng.normal(m, s);
                        if x < 0.0 {
                            clipped += 1;
                            0.0
                        } else {
                            x
                        }
                    })
                    .collect();
                FeatureVector::from_finite(values)
            })
            .collect();
        classes.push(ClassSamples {
            name: class.name.clone(),
            vectors,
        });
    }
    let total = spec.classes.len() * n_per_class * spec.d;
    Ok((EmbeddingDataset::new(spec.d, classes)?, clipped, total))
}

pub fn gen_gaussian_task(spec: &SyntheticTaskSpec, n_per_class: usize, seed: u64) -> Result<EmbeddingDataset> {
    Ok(gen_gaussian_task_counted(spec, n_per_class, seed)?.0)
}

/// Positive per-channel multiplicative distortion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasInjection {
    scale: Vec<f64>,
}

impl BiasInjection {
    pub fn new(scale: Vec<f64>) -> Result<Self> {
        if let Some(l) = scale.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!("bias scale on channel {l} must be positive, got {}", scale[l])));
        }
        Ok(BiasInjection { scale })
    }

    /// Scales with `ln(scale)` uniform on `[-ln factor, ln factor]`.
    pub fn log_uniform(d: usize, factor: f64, seed: u64) -> Result<Self> {
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(Error::Config(format!("bias factor must be >= 1, got {factor}")));
        }
        let mut rng = CounterRng::new(seed, BIAS_STREAM);
        let half = factor.ln();
        BiasInjection::new((0..d).map(|_| rng.uniform(-half, half).exp()).collect())
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Largest over smallest scale.
    pub fn spread(&self) -> f64 {
        let max = self.scale.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.scale.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// Per-channel weights that undo the injection.
    pub fn inverse(&self) -> Vec<f64> {
        self.scale.iter().map(|s| 1.0 / s).collect()
    }
}

pub fn inject_bias(dataset: &EmbeddingDataset, bias: &BiasInjection) -> Result<EmbeddingDataset> {
    check_dim(dataset.dimensionality(), bias.scale.len())?;
    dataset.try_map(|v| {
        FeatureVector::new(v.iter().zip(&bias.scale).map(|(x, s)| x * s).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::class_stats;

    fn spec(mean: Vec<f64>, std: Vec<f64>, margin_rule: bool) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            d: mean.len(),
            classes: vec![SyntheticClass { name: "a".into(), mean, std }],
            margin_rule,
        }
    }

    #[test]
    fn zero_std_reproduces_mean() {
        let ds = gen_gaussian_task(&spec(vec![0.3, 1.5], vec![0.0, 0.0], true), 20, 1).unwrap();
        for v in &ds.classes()[0].vectors {
            assert_eq!(v.as_slice(), &[0.3, 1.5]);
        }
    }

    #[test]
    fn margin_rule_keeps_clipping_rare() {
        let s = spec(vec![0.4; 8], vec![0.1; 8], true);
        let (_, clipped, total) = gen_gaussian_task_counted(&s, 20_000, 5).unwrap();
        // P(N(0,1) < -4) ~ 3.2e-5
        assert!((clipped as f64) < 1e-4 * total as f64, "{clipped}/{total}");
    }

    #[test]
    fn margin_rule_violation_is_rejected() {
        let s = spec(vec![0.3], vec![0.1], true);
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        assert!(spec(vec![0.3], vec![0.1], false).validate().is_ok());
    }

    #[test]
    fn sample_moments_match_spec() {
        let mean = vec![1.0, 0.5, 2.0];
        let std = vec![0.2, 0.1, 0.3];
        let ds = gen_gaussian_task(&spec(mean.clone(), std.clone(), true), 100_000, 2).unwrap();
        let st = class_stats(&ds.classes()[0].vectors).unwrap();
        for l in 0..3 {
            assert!(((st.mu()[l] - mean[l]) / mean[l]).abs() < 0.02);
            assert!(((st.sigma()[l] - std[l]) / std[l]).abs() < 0.02);
        }
    }

    #[test]
    fn bias_injection() {
        let s = SyntheticTaskSpec::random(3, 2, 0.5, 0.3, 0.05, true, 4).unwrap();
        let ds = gen_gaussian_task(&s, 10, 4).unwrap();
        assert_eq!(inject_bias(&ds, &BiasInjection::new(vec![1.0, 1.0]).unwrap()).unwrap(), ds);
        let biased = inject_bias(&ds, &BiasInjection::new(vec![2.0, 1.0]).unwrap()).unwrap();
        for (c, class) in ds.classes().iter().enumerate() {
            let before = class_stats(&class.vectors).unwrap();
            let after = class_stats(&biased.classes()[c].vectors).unwrap();
            assert_eq!(after.mu()[0], 2.0 * before.mu()[0]);
            assert_eq!(after.mu()[1], before.mu()[1]);
        }
        assert!(inject_bias(&ds, &BiasInjection::new(vec![1.0]).unwrap()).is_err());
        assert!(BiasInjection::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn log_uniform_scales_stay_in_range() {
        let b = BiasInjection::log_uniform(64, 4.0, 3).unwrap();
        assert!(b.scale().iter().all(|&s| (0.25..=4.0).contains(&s)));
        assert!(b.spread() >= 4.0);
    }
}
