//! Mean magnitude of channels (MMC) across tasks and datasets, and the
//! distances used to compare them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ChannelStats, EmbeddingDataset, FeatureVector, MMCVector};
use crate::error::{check_dim, Error, Result};
use crate::numfmt::format_f64;
use crate::oracle::{class_stats, oracle_mmc, BinaryTaskStats, OracleConfig};
use crate::transforms::{Transform, TransformSpec};

/// Reporting factor applied to task- and image-level distances.
pub const DISTANCE_REPORT_SCALE: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MmcMode {
    Original,
    Transformed { transform: TransformSpec },
    Oracle { config: OracleConfig },
}

impl MmcMode {
    pub fn label(&self) -> String {
        match self {
            MmcMode::Original => "original".into(),
            MmcMode::Transformed { transform } => transform.label(),
            MmcMode::Oracle { .. } => "oracle".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMMC {
    pub weights: MMCVector,
    pub mode: MmcMode,
    pub pair_count: usize,
}

/// Per-class quantities that pair MMCs are built from.
enum ClassSummary {
    /// Per-class mean absolute value, after the transform if any.
    Magnitudes(Vec<Vec<f64>>),
    Oracle(Vec<ChannelStats>, OracleConfig),
}

fn mean_magnitude(vectors: &[FeatureVector], transform: Option<&Transform>) -> Result<Vec<f64>> {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut sum = vec![0.0; d];
    for v in vectors {
        let v = match transform {
            Some(t) => t.apply(v)?,
            None => v.clone(),
        };
        for (s, x) in sum.iter_mut().zip(v.iter()) {
            *s += x.abs();
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

impl ClassSummary {
    fn new(dataset: &EmbeddingDataset, mode: &MmcMode) -> Result<Self> {
        Ok(match mode {
            MmcMode::Original => ClassSummary::Magnitudes(
                dataset
                    .classes()
                    .iter()
                    .map(|c| mean_magnitude(&c.vectors, None))
                    .collect::<Result<_>>()?,
            ),
            MmcMode::Transformed { transform } => {
                let t = Transform::new(transform.clone())?;
                ClassSummary::Magnitudes(
                    dataset
                        .classes()
                        .iter()
                        .map(|c| {
                            mean_magnitude(&c.vectors, Some(&t))
                                .map_err(|e| Error::Domain(format!("class {:?}: {e}", c.name)))
                        })
                        .collect::<Result<_>>()?,
                )
            }
            MmcMode::Oracle { config } => {
                config.validate()?;
                ClassSummary::Oracle(
                    dataset
                        .classes()
                        .iter()
                        .map(|c| class_stats(&c.vectors))
                        .collect::<Result<_>>()?,
                    *config,
                )
            }
        })
    }

    fn pair(&self, i: usize, j: usize) -> Result<MMCVector> {
        let raw = match self {
            ClassSummary::Magnitudes(m) => {
                MMCVector::new(m[i].iter().zip(&m[j]).map(|(a, b)| 0.5 * (a + b)).collect())?
            }
            ClassSummary::Oracle(stats, cfg) => {
                let task = BinaryTaskStats::new(stats[i].clone(), stats[j].clone())?;
                oracle_mmc(&task, cfg)?
            }
        };
        raw.normalize()
            .map_err(|e| Error::Domain(format!("MMC of classes {i} and {j}: {e}")))
    }
}

fn check_pair(dataset: &EmbeddingDataset, i: usize, j: usize) -> Result<()> {
    dataset.class(i)?;
    dataset.class(j)?;
    if i == j {
        return Err(Error::Validation(format!("pair MMC needs two distinct classes, got {i} twice")));
    }
    Ok(())
}

/// l1-normalized MMC of the binary task formed by classes `i` and `j`.
///
/// `Original` averages the two classes' mean magnitudes; `Transformed`
/// does the same after transforming every feature; `Oracle` uses the oracle
/// weights of the pair.
pub fn pair_mmc(dataset: &EmbeddingDataset, i: usize, j: usize, mode: &MmcMode) -> Result<MMCVector> {
    check_pair(dataset, i, j)?;
    ClassSummary::new(dataset, mode)?.pair(i, j)
}

fn pairs(c: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..c).flat_map(move |i| (i + 1..c).map(move |j| (i, j)))
}

fn need_two_classes(dataset: &EmbeddingDataset) -> Result<()> {
    if dataset.num_classes() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 classes, dataset has {}",
            dataset.num_classes()
        )));
    }
    Ok(())
}

/// Normalized sum of all pairwise normalized MMCs.
pub fn dataset_mmc(dataset: &EmbeddingDataset, mode: &MmcMode) -> Result<DatasetMMC> {
    need_two_classes(dataset)?;
    let source = ClassSummary::new(dataset, mode)?;
    let mut sum = vec![0.0; dataset.dimensionality()];
    let mut pair_count = 0;
    for (i, j) in pairs(dataset.num_classes()) {
        for (s, w) in sum.iter_mut().zip(source.pair(i, j)?.weights()) {
            *s += w;
        }
        pair_count += 1;
    }
    Ok(DatasetMMC {
        weights: MMCVector::new(sum)?.normalize()?,
        mode: mode.clone(),
        pair_count,
    })
}

/// `mean_l (x_l - y_l)^2 / x_l^2`, relative to the reference `x`.
pub fn normalized_msd(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    if let Some(l) = x.iter().position(|&v| v == 0.0) {
        return Err(Error::Domain(format!("reference is zero on channel {l}")));
    }
    let total: f64 = x.iter().zip(y).map(|(a, b)| ((a - b) / a).powi(2)).sum();
    Ok(total / x.len() as f64)
}

/// `mean_l (x_l - y_l)^2`.
pub fn msd(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    let total: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(total / x.len() as f64)
}

/// Normalized MSD between two dataset MMCs, relative to `reference`.
pub fn dataset_level_distance(reference: &DatasetMMC, other: &DatasetMMC) -> Result<f64> {
    normalized_msd(reference.weights.weights(), other.weights.weights())
}

/// Mean MSD between the pair MMCs of every class pair under two modes.
pub fn task_level_distance(dataset: &EmbeddingDataset, mode_a: &MmcMode, mode_b: &MmcMode) -> Result<f64> {
    need_two_classes(dataset)?;
    let a = ClassSummary::new(dataset, mode_a)?;
    let b = ClassSummary::new(dataset, mode_b)?;
    let mut total = 0.0;
    let mut count = 0;
    for (i, j) in pairs(dataset.num_classes()) {
        total += msd(a.pair(i, j)?.weights(), b.pair(i, j)?.weights())?;
        count += 1;
    }
    Ok(total / count as f64)
}

fn l1_normalized(v: &FeatureVector, t: &Transform, class: &str, row: usize) -> Result<Vec<f64>> {
    let out = t.apply(v).map_err(|e| Error::Domain(format!("class {class:?} row {row}: {e}")))?;
    let norm: f64 = out.iter().map(|x| x.abs()).sum();
    if norm == 0.0 {
        return Err(Error::Domain(format!(
            "class {class:?} row {row} has zero l1 norm under {}",
            t.spec().label()
        )));
    }
    Ok(out.iter().map(|x| x / norm).collect())
}

/// Mean MSD over all features between their l1-normalized versions under
/// two transforms.
pub fn image_level_distance(
    dataset: &EmbeddingDataset,
    transform_a: &TransformSpec,
    transform_b: &TransformSpec,
) -> Result<f64> {
    let a = Transform::new(transform_a.clone())?;
    let b = Transform::new(transform_b.clone())?;
    let mut total = 0.0;
    for class in dataset.classes() {
        for (row, v) in class.vectors.iter().enumerate() {
            let x = l1_normalized(v, &a, &class.name, row)?;
            let y = l1_normalized(v, &b, &class.name, row)?;
            total += msd(&x, &y)?;
        }
    }
    Ok(total / dataset.num_vectors() as f64)
}

/// One point of a before/after channel scatter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterRow {
    pub channel: usize,
    pub mmc_before: f64,
    pub mmc_after: f64,
}

pub fn scatter_rows(before: &MMCVector, after: &MMCVector) -> Result<Vec<ScatterRow>> {
    check_dim(before.dim(), after.dim())?;
    Ok(before
        .weights()
        .iter()
        .zip(after.weights())
        .enumerate()
        .map(|(channel, (&mmc_before, &mmc_after))| ScatterRow {
            channel,
            mmc_before,
            mmc_after,
        })
        .collect())
}

pub const SCATTER_HEADER: &str = "channel,mmc_before,mmc_after";

pub fn scatter_to_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from(SCATTER_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.channel, format_f64(r.mmc_before), format_f64(r.mmc_after));
    }
    out
}

pub fn save_scatter_csv(rows: &[ScatterRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, scatter_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn parse_scatter_csv(text: &str) -> Result<Vec<ScatterRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == SCATTER_HEADER => {}
        Some(_) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SCATTER_HEADER:?}"),
            })
        }
        None => return Err(Error::Empty("scatter CSV".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        rows.push(ScatterRow {
            channel: fields[0].parse().map_err(|e| bad(format!("{:?}: {e}", fields[0])))?,
            mmc_before: num(fields[1])?,
            mmc_after: num(fields[2])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassSamples;
    use proptest::prelude::*;

    const BEFORE_A: [f64; 3] = [0.05, 0.08, 0.87];
    const AFTER_A: [f64; 3] = [0.15, 0.1, 0.75];
    const BEFORE_B: [f64; 3] = [0.4, 0.3, 0.3];
    const AFTER_B: [f64; 3] = [0.55, 0.22, 0.23];

    #[test]
    fn worked_example_distances() {
        let na = normalized_msd(&BEFORE_A, &AFTER_A).unwrap();
        let nb = normalized_msd(&BEFORE_B, &AFTER_B).unwrap();
        let ma = msd(&BEFORE_A, &AFTER_A).unwrap();
        let mb = msd(&BEFORE_B, &AFTER_B).unwrap();
        assert!((na - 1.36).abs() <= 0.005, "{na}");
        assert!((nb - 0.09).abs() <= 0.005, "{nb}");
        assert!((ma - 0.008).abs() <= 0.0005, "{ma}");
        assert!((mb - 0.011).abs() <= 0.0005, "{mb}");
        // The two measures disagree on which change is larger.
        assert!(na > nb && ma < mb);
    }

    #[test]
    fn distance_edge_cases() {
        assert_eq!(normalized_msd(&BEFORE_A, &BEFORE_A).unwrap(), 0.0);
        assert!(matches!(normalized_msd(&[0.0, 1.0], &[1.0, 1.0]), Err(Error::Domain(_))));
        assert_eq!(msd(&BEFORE_A, &AFTER_A).unwrap(), msd(&AFTER_A, &BEFORE_A).unwrap());
        assert!(msd(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn dataset(classes: &[(&str, &[&[f64]])]) -> EmbeddingDataset {
        let d = classes[0].1[0].len();
        EmbeddingDataset::new(
            d,
            classes
                .iter()
                .map(|(name, rows)| ClassSamples {
                    name: name.to_string(),
                    vectors: rows.iter().map(|r| FeatureVector::new(r.to_vec()).unwrap()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn l1(v: &[f64]) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn pair_mmc_modes() {
        let ds = dataset(&[("a", &[&[1.0, 2.0], &[3.0, 2.0]]), ("b", &[&[2.0, 1.0], &[2.0, 3.0]])]);
        let w = pair_mmc(&ds, 0, 1, &MmcMode::Original).unwrap();
        assert!(close(w.weights(), &[0.5, 0.5], 1e-15));
        assert!(w.is_normalized());

        // Constant features: the transformed MMC is the normalized transform.
        let ds = dataset(&[("a", &[&[0.1, 0.4], &[0.1, 0.4]]), ("b", &[&[0.3, 0.2]])]);
        let k = 1.3;
        let phi = |x: f64| 1.0 / (1.0 / x + 1.0).ln().powf(k);
        let expected = l1(&[0.5 * (phi(0.1) + phi(0.3)), 0.5 * (phi(0.4) + phi(0.2))]);
        let mode = MmcMode::Transformed { transform: TransformSpec::Simple { k } };
        let w = pair_mmc(&ds, 0, 1, &mode).unwrap();
        assert!(close(w.weights(), &expected, 1e-14));

        let oracle = MmcMode::Oracle { config: OracleConfig::default() };
        assert!(pair_mmc(&ds, 0, 1, &oracle).unwrap().is_normalized());
        assert!(pair_mmc(&ds, 0, 0, &MmcMode::Original).is_err());
        assert!(pair_mmc(&ds, 0, 5, &MmcMode::Original).is_err());
    }

    fn three_classes() -> EmbeddingDataset {
        dataset(&[
            ("a", &[&[1.0, 0.0, 3.0]]),
            ("b", &[&[0.0, 2.0, 2.0]]),
            ("c", &[&[2.0, 2.0, 0.0]]),
        ])
    }

    #[test]
    fn dataset_mmc_by_hand() {
        let ds = three_classes();
        // Pair means: ab (0.5,1,2.5)/4, ac (1.5,1,1.5)/4, bc (1,2,1)/4.
        let expected = l1(&[
            (0.5 + 1.5 + 1.0) / 4.0,
            (1.0 + 1.0 + 2.0) / 4.0,
            (2.5 + 1.5 + 1.0) / 4.0,
        ]);
        let got = dataset_mmc(&ds, &MmcMode::Original).unwrap();
        assert_eq!(got.pair_count, 3);
        assert!(close(got.weights.weights(), &expected, 1e-15));
        assert!(got.weights.is_normalized());
    }

    #[test]
    fn dataset_mmc_of_two_classes_is_the_pair() {
        let ds = dataset(&[("a", &[&[1.0, 0.5]]), ("b", &[&[0.2, 3.0]])]);
        let mode = MmcMode::Transformed { transform: TransformSpec::simple() };
        let got = dataset_mmc(&ds, &mode).unwrap();
        assert_eq!(got.pair_count, 1);
        assert!(close(got.weights.weights(), pair_mmc(&ds, 0, 1, &mode).unwrap().weights(), 1e-15));
        let one = dataset(&[("a", &[&[1.0]])]);
        assert!(dataset_mmc(&one, &MmcMode::Original).is_err());
    }

    #[test]
    fn dataset_mmc_ignores_class_order() {
        let ds = three_classes();
        let rev = dataset(&[
            ("c", &[&[2.0, 2.0, 0.0]]),
            ("b", &[&[0.0, 2.0, 2.0]]),
            ("a", &[&[1.0, 0.0, 3.0]]),
        ]);
        let a = dataset_mmc(&ds, &MmcMode::Original).unwrap();
        let b = dataset_mmc(&rev, &MmcMode::Original).unwrap();
        assert!(close(a.weights.weights(), b.weights.weights(), 1e-15));
    }

    #[test]
    fn dataset_level_is_asymmetric() {
        let ds = three_classes();
        let a = dataset_mmc(&ds, &MmcMode::Original).unwrap();
        let b = DatasetMMC {
            weights: MMCVector::new(vec![0.2, 0.3, 0.5]).unwrap(),
            ..a.clone()
        };
        assert_eq!(dataset_level_distance(&a, &a).unwrap(), 0.0);
        let ab = dataset_level_distance(&a, &b).unwrap();
        let ba = dataset_level_distance(&b, &a).unwrap();
        assert!(ab > 0.0 && ba > 0.0 && ab != ba);
        // a = (3, 4, 5) / 12
        let x: [f64; 3] = [3.0 / 12.0, 4.0 / 12.0, 5.0 / 12.0];
        let y: [f64; 3] = [0.2, 0.3, 0.5];
        let hand = x.iter().zip(&y).map(|(x, y)| ((x - y) / x).powi(2)).sum::<f64>() / 3.0;
        assert!((ab - hand).abs() < 1e-15);
    }

    #[test]
    fn task_level_distance_reductions() {
        let ds = three_classes();
        let simple = MmcMode::Transformed { transform: TransformSpec::Simple { k: 1.0 } };
        assert_eq!(task_level_distance(&ds, &simple, &simple).unwrap(), 0.0);
        let two = dataset(&[("a", &[&[1.0, 0.5]]), ("b", &[&[0.2, 3.0]])]);
        let got = task_level_distance(&two, &MmcMode::Original, &simple).unwrap();
        let hand = msd(
            pair_mmc(&two, 0, 1, &MmcMode::Original).unwrap().weights(),
            pair_mmc(&two, 0, 1, &simple).unwrap().weights(),
        )
        .unwrap();
        assert_eq!(got, hand);
    }

    #[test]
    fn image_level_distance_by_hand() {
        let ds = dataset(&[("a", &[&[0.1, 0.2]]), ("b", &[&[1.0, 3.0]])]);
        let none = TransformSpec::None;
        let simple = TransformSpec::Simple { k: 1.0 };
        assert_eq!(image_level_distance(&ds, &simple, &simple).unwrap(), 0.0);
        let phi = |x: f64| 1.0 / (1.0 / x + 1.0).ln();
        let per_image = |v: [f64; 2]| {
            let a = l1(&v);
            let b = l1(&[phi(v[0]), phi(v[1])]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / 2.0
        };
        let hand = 0.5 * (per_image([0.1, 0.2]) + per_image([1.0, 3.0]));
        let got = image_level_distance(&ds, &none, &simple).unwrap();
        assert!((got - hand).abs() < 1e-15, "{got} vs {hand}");

        let single = dataset(&[("a", &[&[0.1, 0.2]])]);
        assert!((image_level_distance(&single, &none, &simple).unwrap() - per_image([0.1, 0.2])).abs() < 1e-15);

        let zero = dataset(&[("a", &[&[0.0, 0.0]])]);
        let err = image_level_distance(&zero, &none, &simple).unwrap_err();
        assert!(err.to_string().contains("row 0"), "{err}");
    }

    #[test]
    fn scatter_csv_round_trip() {
        let before = MMCVector::new(vec![0.1, 0.2, 0.7]).unwrap();
        let after = MMCVector::new(vec![0.3, 0.3, 0.4]).unwrap();
        let rows = scatter_rows(&before, &after).unwrap();
        let text = scatter_to_csv(&rows);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_scatter_csv(&text).unwrap(), rows);
        assert!(parse_scatter_csv("x,y\n").is_err());
    }

    proptest! {
        #[test]
        fn normalized_msd_is_scale_free(
            x in proptest::collection::vec(0.01f64..10.0, 1..8),
            noise in proptest::collection::vec(-1.0f64..1.0, 8),
            c in 0.01f64..100.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| a + n).collect();
            let base = normalized_msd(&x, &y).unwrap();
            let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
            let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
            let scaled = normalized_msd(&cx, &cy).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
        }
    }
}
