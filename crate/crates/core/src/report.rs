//! Evaluation reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::episodes::EvalConfig;
use crate::error::{Error, Result};
use crate::numfmt::to_json_g17;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_episode_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub ci95_halfwidth: f64,
    pub config_echo: EvalConfig,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_accuracies(per_episode_accuracy: Vec<f64>, config_echo: EvalConfig) -> Self {
        let (mean_accuracy, ci95_halfwidth) = mean_and_ci95(&per_episode_accuracy);
        EvalReport {
            seed: config_echo.episodes.seed,
            per_episode_accuracy,
            mean_accuracy,
            ci95_halfwidth,
            config_echo,
        }
    }
}

/// Mean and `1.96 * s / sqrt(n)` with the `n - 1` sample standard deviation.
/// A single value has a zero-width interval.
pub fn mean_and_ci95(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * var.sqrt() / n.sqrt())
}

pub fn report_to_json(report: &EvalReport) -> Result<Vec<u8>> {
    Ok(to_json_g17(report)?)
}

pub fn save_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_to_json(report)?).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&text)?)
}
