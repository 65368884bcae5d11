//! Domain types shared by the whole crate.

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Channel activations of one sample. Always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(channel) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "channel {channel} holds non-finite value {}",
                values[channel]
            )));
        }
        Ok(FeatureVector(values))
    }

    /// Skips the finiteness check; callers guarantee it.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        FeatureVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_non_negative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSamples {
    pub name: String,
    pub vectors: Vec<FeatureVector>,
}

/// Feature vectors grouped by class, in first-appearance order.
///
/// Immutable once built; share it across workers by reference.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    dimensionality: usize,
    classes: Vec<ClassSamples>,
    non_negative: bool,
}

impl EmbeddingDataset {
    pub fn new(dimensionality: usize, classes: Vec<ClassSamples>) -> Result<Self> {
        if dimensionality == 0 {
            return Err(Error::Validation("dimensionality must be positive".into()));
        }
        if classes.is_empty() {
            return Err(Error::Validation("dataset has no classes".into()));
        }
        let mut seen = HashSet::new();
        for class in &classes {
            if !seen.insert(class.name.as_str()) {
                return Err(Error::Validation(format!("duplicate class name {:?}", class.name)));
            }
            if class.vectors.is_empty() {
                return Err(Error::Validation(format!("class {:?} has no vectors", class.name)));
            }
            for (i, v) in class.vectors.iter().enumerate() {
                if v.len() != dimensionality {
                    return Err(Error::Validation(format!(
                        "class {:?} vector {i} has {} channels, expected {dimensionality}",
                        class.name,
                        v.len()
                    )));
                }
            }
        }
        let non_negative = classes
            .iter()
            .flat_map(|c| &c.vectors)
            .all(FeatureVector::is_non_negative);
        Ok(EmbeddingDataset {
            dimensionality,
            classes,
            non_negative,
        })
    }

    /// Groups `(label, vector)` rows by label, keeping first-appearance order
    /// of labels and file order within each class.
    pub fn from_rows<I>(dimensionality: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, FeatureVector)>,
    {
        let mut classes: Vec<ClassSamples> = Vec::new();
        let mut index = std::collections::HashMap::new();
        for (label, v) in rows {
            let slot = *index.entry(label.clone()).or_insert_with(|| {
                classes.push(ClassSamples {
                    name: label,
                    vectors: Vec::new(),
                });
                classes.len() - 1
            });
            classes[slot].vectors.push(v);
        }
        EmbeddingDataset::new(dimensionality, classes)
    }

    pub fn dimensionality(&self) -> usize {
        self.dimensionality
    }

    pub fn classes(&self) -> &[ClassSamples] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, index: usize) -> Result<&ClassSamples> {
        self.classes.get(index).ok_or_else(|| {
            Error::Config(format!(
                "class index {index} out of range ({} classes)",
                self.classes.len()
            ))
        })
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn non_negative(&self) -> bool {
        self.non_negative
    }

    pub fn num_vectors(&self) -> usize {
        self.classes.iter().map(|c| c.vectors.len()).sum()
    }

    pub fn iter_vectors(&self) -> impl Iterator<Item = (usize, &FeatureVector)> {
        self.classes
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.vectors.iter().map(move |v| (i, v)))
    }

    /// Applies `f` to every vector, keeping class structure.
    pub fn try_map<F>(&self, mut f: F) -> Result<EmbeddingDataset>
    where
        F: FnMut(&FeatureVector) -> Result<FeatureVector>,
    {
        let classes = self
            .classes
            .iter()
            .map(|c| {
                Ok(ClassSamples {
                    name: c.name.clone(),
                    vectors: c.vectors.iter().map(&mut f).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let d = classes[0].vectors[0].len();
        EmbeddingDataset::new(d, classes)
    }
}

/// Per-channel mean and standard deviation of one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl ChannelStats {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_dim(mu.len(), sigma.len())?;
        if mu.is_empty() {
            return Err(Error::Validation("channel stats are empty".into()));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::Validation("channel stats must be finite".into()));
        }
        if let Some(l) = sigma.iter().position(|&s| s < 0.0) {
            return Err(Error::Validation(format!("negative sigma on channel {l}")));
        }
        Ok(ChannelStats { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Mean-magnitude-of-channels vector, optionally l1-normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MMCVector {
    weights: Vec<f64>,
    normalized: bool,
}

impl MMCVector {
    pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("MMC vector is empty".into()));
        }
        if let Some(l) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Validation(format!(
                "MMC weight on channel {l} is {}, must be finite and >= 0",
                weights[l]
            )));
        }
        let normalized = (weights.iter().sum::<f64>() - 1.0).abs() <= Self::NORMALIZATION_TOLERANCE;
        Ok(MMCVector {
            weights,
            normalized,
        })
    }

    pub fn ones(d: usize) -> Self {
        MMCVector {
            weights: vec![1.0; d],
            normalized: d == 1,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalize(&self) -> Result<MMCVector> {
        let total = self.l1_norm();
        if total <= 0.0 {
            return Err(Error::Domain("cannot l1-normalize an all-zero MMC".into()));
        }
        Ok(MMCVector {
            weights: self.weights.iter().map(|w| w / total).collect(),
            normalized: true,
        })
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<MMCVector> {
        MMCVector::new(self.weights.iter().map(|w| w * c).collect())
    }
}
