//! Test-time classifiers fit on an episode's support set.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureVector, MMCVector};
use crate::error::{check_dim, Error, Result};

/// Per-class mean of the support features.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidModel {
    pub centroids: Vec<Vec<f64>>,
    pub class_indices: Vec<usize>,
}

/// Fits one centroid per support group; group `i` becomes class `i`.
pub fn ncc_fit(support: &[Vec<FeatureVector>]) -> Result<CentroidModel> {
    let d = support
        .iter()
        .flat_map(|g| g.first())
        .map(|v| v.len())
        .next()
        .ok_or_else(|| Error::Validation("support set is empty".into()))?;
    let mut centroids = Vec::with_capacity(support.len());
    for (c, group) in support.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::Validation(format!("support class {c} has no samples")));
        }
        let mut sum = vec![0.0; d];
        for v in group {
            check_dim(d, v.len())?;
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
        let n = group.len() as f64;
        centroids.push(sum.into_iter().map(|s| s / n).collect());
    }
    Ok(CentroidModel {
        class_indices: (0..centroids.len()).collect(),
        centroids,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid in Euclidean distance; ties go to the lowest index.
pub fn ncc_predict(query: &FeatureVector, model: &CentroidModel) -> Result<usize> {
    let mut best = (f64::INFINITY, 0);
    for (centroid, &class) in model.centroids.iter().zip(&model.class_indices) {
        check_dim(centroid.len(), query.len())?;
        let dist = squared_distance(query, centroid);
        if dist < best.0 {
            best = (dist, class);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryLabel {
    First,
    Second,
}

/// Class `First` iff `‖w ⊙ (z - m1)‖ < ‖w ⊙ (z - m2)‖`; ties go to `Second`.
pub fn weighted_ncc_predict(
    query: &[f64],
    first_mean: &[f64],
    second_mean: &[f64],
    weights: &MMCVector,
) -> Result<BinaryLabel> {
    let w = weights.weights();
    check_dim(w.len(), query.len())?;
    check_dim(w.len(), first_mean.len())?;
    check_dim(w.len(), second_mean.len())?;
    Ok(weighted_compare(query, first_mean, second_mean, w))
}

#[inline]
pub(crate) fn weighted_compare(query: &[f64], first: &[f64], second: &[f64], w: &[f64]) -> BinaryLabel {
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for l in 0..w.len() {
        let w2 = w[l] * w[l];
        d1 += w2 * (query[l] - first[l]) * (query[l] - first[l]);
        d2 += w2 * (query[l] - second[l]) * (query[l] - second[l]);
    }
    if d1 < d2 {
        BinaryLabel::First
    } else {
        BinaryLabel::Second
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    /// Multiplied by `1 / n_samples` to give the penalty weight.
    pub l2_strength: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            l2_strength: 1.0,
            learning_rate: 0.5,
            max_iters: 1000,
            tol: 1e-8,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::Config(format!("l2_strength must be >= 0, got {}", self.l2_strength)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Multinomial logistic regression: `classes × dim` weights plus biases.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub final_loss: f64,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearModel {
            weights: vec![vec![0.0; dim]; classes],
            bias: vec![0.0; classes],
            iterations: 0,
            final_loss: f64::NAN,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// Training samples in flat form.
pub struct LinearProblem<'a> {
    pub samples: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub dim: usize,
    /// Penalty weight `lambda` in `mean CE + lambda / 2 * ‖W‖²`.
    pub penalty: f64,
}

impl<'a> LinearProblem<'a> {
    pub fn from_support(support: &'a [Vec<FeatureVector>], l2_strength: f64) -> Result<Self> {
        if support.len() < 2 {
            return Err(Error::Validation(format!(
                "linear classifier needs at least 2 classes, got {}",
                support.len()
            )));
        }
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for (c, group) in support.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Validation(format!("support class {c} has no samples")));
            }
            for v in group {
                samples.push(v.as_slice());
                labels.push(c);
            }
        }
        let dim = samples[0].len();
        for s in &samples {
            check_dim(dim, s.len())?;
        }
        let penalty = l2_strength / samples.len() as f64;
        Ok(LinearProblem {
            samples,
            labels,
            classes: support.len(),
            dim,
            penalty,
        })
    }

    /// Objective value and its gradient with respect to weights and biases.
    pub fn loss_and_gradient(&self, model: &LinearModel) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
        let n = self.samples.len() as f64;
        let mut grad_w = vec![vec![0.0; self.dim]; self.classes];
        let mut grad_b = vec![0.0; self.classes];
        let mut loss = 0.0;
        let mut probs = vec![0.0; self.classes];
        for (x, &y) in self.samples.iter().zip(&self.labels) {
            let logits = model.logits(x);
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (p, z) in probs.iter_mut().zip(&logits) {
                *p = (z - max).exp();
                total += *p;
            }
            loss += total.ln() + max - logits[y];
            for c in 0..self.classes {
                let residual = probs[c] / total - if c == y { 1.0 } else { 0.0 };
                grad_b[c] += residual;
                for (g, xi) in grad_w[c].iter_mut().zip(x.iter()) {
                    *g += residual * xi;
                }
            }
        }
        let mut penalty_sum = 0.0;
        for c in 0..self.classes {
            grad_b[c] /= n;
            for (g, w) in grad_w[c].iter_mut().zip(&model.weights[c]) {
                *g = *g / n + self.penalty * w;
                penalty_sum += w * w;
            }
        }
        (loss / n + 0.5 * self.penalty * penalty_sum, grad_w, grad_b)
    }
}

/// Full-batch gradient descent from zero weights.
///
/// Stops once an iteration lowers the objective by less than `tol`, or
/// after `max_iters` updates. `trace`, when given, receives the objective
/// before every update.
pub fn linear_fit_traced(
    support: &[Vec<FeatureVector>],
    cfg: &LinearConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LinearModel> {
    cfg.validate()?;
    let problem = LinearProblem::from_support(support, cfg.l2_strength)?;
    let mut model = LinearModel::zeros(problem.classes, problem.dim);
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    let (mut loss, mut grad_w, mut grad_b) = problem.loss_and_gradient(&model);
    loop {
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became {loss} after {iterations} iterations; try a smaller learning rate"
            )));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(loss);
        }
        if previous - loss < cfg.tol || iterations == cfg.max_iters {
            break;
        }
        previous = loss;
        for c in 0..problem.classes {
            model.bias[c] -= cfg.learning_rate * grad_b[c];
            for (w, g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= cfg.learning_rate * g;
            }
        }
        iterations += 1;
        (loss, grad_w, grad_b) = problem.loss_and_gradient(&model);
    }
    model.iterations = iterations;
    model.final_loss = loss;
    Ok(model)
}

pub fn linear_fit(support: &[Vec<FeatureVector>], cfg: &LinearConfig) -> Result<LinearModel> {
    linear_fit_traced(support, cfg, None)
}

/// Largest logit; ties go to the lowest index.
pub fn linear_predict(query: &FeatureVector, model: &LinearModel) -> Result<usize> {
    if let Some(w) = model.weights.first() {
        check_dim(w.len(), query.len())?;
    }
    let logits = model.logits(query);
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Ncc,
    Lc,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn centroids_are_means() {
        let m = ncc_fit(&[vec![fv(&[0.0, 0.0]), fv(&[2.0, 2.0])], vec![fv(&[5.0, 1.0])]]).unwrap();
        assert_eq!(m.centroids[0], vec![1.0, 1.0]);
        assert_eq!(m.centroids[1], vec![5.0, 1.0]);
        let swapped = ncc_fit(&[vec![fv(&[2.0, 2.0]), fv(&[0.0, 0.0])], vec![fv(&[5.0, 1.0])]]).unwrap();
        assert_eq!(m, swapped);
        assert!(ncc_fit(&[vec![fv(&[1.0])], vec![]]).is_err());
    }

    #[test]
    fn ncc_predictions() {
        let m = ncc_fit(&[vec![fv(&[0.0, 0.0])], vec![fv(&[10.0, 10.0])]]).unwrap();
        assert_eq!(ncc_predict(&fv(&[1.0, 1.0]), &m).unwrap(), 0);
        assert_eq!(ncc_predict(&fv(&[10.0, 10.0]), &m).unwrap(), 1);
        assert_eq!(ncc_predict(&fv(&[5.0, 5.0]), &m).unwrap(), 0);
        assert!(ncc_predict(&fv(&[1.0]), &m).is_err());
    }

    #[test]
    fn ncc_permutation_invariance() {
        let mut rng = CounterRng::new(1, 1);
        let mut draw = |n| (0..n).map(|_| rng.next_f64()).collect::<Vec<f64>>();
        let support: Vec<Vec<FeatureVector>> = (0..3).map(|_| (0..2).map(|_| fv(&draw(5))).collect()).collect();
        let perm = [3, 0, 4, 1, 2];
        let permute = |v: &FeatureVector| fv(&perm.iter().map(|&p| v[p]).collect::<Vec<_>>());
        let permuted: Vec<Vec<FeatureVector>> = support.iter().map(|g| g.iter().map(permute).collect()).collect();
        let m = ncc_fit(&support).unwrap();
        let mp = ncc_fit(&permuted).unwrap();
        for _ in 0..50 {
            let q = fv(&draw(5));
            assert_eq!(ncc_predict(&q, &m).unwrap(), ncc_predict(&permute(&q), &mp).unwrap());
        }
    }

    #[test]
    fn weighted_ncc_rules() {
        let m1 = [1.0, 2.0];
        let m2 = [3.0, 0.5];
        let w = MMCVector::new(vec![0.7, 1.3]).unwrap();
        assert_eq!(weighted_ncc_predict(&m1, &m1, &m2, &w).unwrap(), BinaryLabel::First);
        let tie = [2.0, 1.25];
        assert_eq!(
            weighted_ncc_predict(&tie, &[1.0, 1.25], &[3.0, 1.25], &MMCVector::ones(2)).unwrap(),
            BinaryLabel::Second
        );
        let zero_second = MMCVector::new(vec![1.0, 0.0]).unwrap();
        for y in [-5.0, 0.0, 9.0] {
            assert_eq!(
                weighted_ncc_predict(&[1.5, y], &m1, &m2, &zero_second).unwrap(),
                BinaryLabel::First
            );
        }
        let mut rng = CounterRng::new(4, 0);
        for _ in 0..200 {
            let q = [rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)];
            let c = rng.uniform(0.01, 100.0);
            assert_eq!(
                weighted_ncc_predict(&q, &m1, &m2, &w).unwrap(),
                weighted_ncc_predict(&q, &m1, &m2, &w.scaled(c).unwrap()).unwrap()
            );
        }
    }

    #[test]
    fn weighted_with_unit_weights_is_plain_ncc() {
        let mut rng = CounterRng::new(8, 2);
        let m1: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
        let m2: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
        let model = CentroidModel { centroids: vec![m1.clone(), m2.clone()], class_indices: vec![0, 1] };
        for _ in 0..200 {
            let q: Vec<f64> = (0..4).map(|_| rng.next_f64()).collect();
            let plain = ncc_predict(&fv(&q), &model).unwrap();
            let weighted = weighted_ncc_predict(&q, &m1, &m2, &MMCVector::ones(4)).unwrap();
            assert_eq!(plain == 0, weighted == BinaryLabel::First);
        }
    }

    fn separable() -> Vec<Vec<FeatureVector>> {
        vec![
            vec![fv(&[0.0, 0.1]), fv(&[0.2, 0.0]), fv(&[0.1, 0.3])],
            vec![fv(&[1.0, 0.9]), fv(&[0.8, 1.1]), fv(&[1.2, 1.0])],
        ]
    }

    #[test]
    fn separable_fit_is_perfect() {
        let cfg = LinearConfig { l2_strength: 0.0, ..Default::default() };
        let model = linear_fit(&separable(), &cfg).unwrap();
        for (c, group) in separable().iter().enumerate() {
            for v in group {
                assert_eq!(linear_predict(v, &model).unwrap(), c);
            }
        }
        assert!(model.iterations <= cfg.max_iters);
    }

    #[test]
    fn duplicated_columns_get_equal_weights() {
        let support: Vec<Vec<FeatureVector>> = separable()
            .into_iter()
            .map(|g| g.into_iter().map(|v| fv(&[v[0], v[1], v[1]])).collect())
            .collect();
        let model = linear_fit(&support, &LinearConfig::default()).unwrap();
        for w in &model.weights {
            assert_eq!(w[1], w[2]);
        }
    }

    #[test]
    fn zero_model_predicts_first_class() {
        let model = LinearModel::zeros(4, 3);
        assert_eq!(linear_predict(&fv(&[1.0, -2.0, 3.0]), &model).unwrap(), 0);
        let mut shifted = model.clone();
        shifted.bias = vec![0.3, 1.2, -0.5, 1.2];
        let mut lifted = shifted.clone();
        lifted.bias.iter_mut().for_each(|b| *b += 7.5);
        let q = fv(&[0.2, 0.1, 0.0]);
        assert_eq!(linear_predict(&q, &shifted).unwrap(), 1);
        assert_eq!(linear_predict(&q, &lifted).unwrap(), 1);
    }

    #[test]
    fn divergent_rate_is_reported() {
        let support = vec![vec![fv(&[1e150, 0.0])], vec![fv(&[0.0, 1e150])]];
        let cfg = LinearConfig { learning_rate: 1e10, ..Default::default() };
        assert!(matches!(linear_fit(&support, &cfg), Err(Error::Numeric(_))));
    }

    #[test]
    fn fit_is_deterministic_and_monotone() {
        let mut rng = CounterRng::new(2, 3);
        let support: Vec<Vec<FeatureVector>> = (0..3)
            .map(|c| (0..5).map(|_| fv(&[rng.normal(c as f64, 0.5), rng.normal(0.0, 1.0)])).collect())
            .collect();
        let mut trace = Vec::new();
        let a = linear_fit_traced(&support, &LinearConfig::default(), Some(&mut trace)).unwrap();
        let b = linear_fit(&support, &LinearConfig::default()).unwrap();
        assert_eq!(a, b);
        for pair in trace.windows(2).take(trace.len().saturating_sub(2)) {
            assert!(pair[1] <= pair[0]);
        }
    }
}
