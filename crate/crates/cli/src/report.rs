//! Results persistence: per-run records plus aggregate statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use clib_core::trainer::RunResult;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Population standard deviation over replicate seeds.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub a_auc: MetricStats,
    pub a_auc_raw: MetricStats,
    pub a_avg: MetricStats,
    pub f_last: MetricStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub aggregate: Aggregate,
}

pub fn mean_and_std(values: &[f64]) -> MetricStats {
    assert!(!values.is_empty());
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MetricStats {
        mean,
        std: var.sqrt(),
    }
}

pub fn aggregate_runs(runs: &[RunResult]) -> Aggregate {
    let collect = |f: fn(&RunResult) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
    Aggregate {
        a_auc: mean_and_std(&collect(|r| r.metrics.a_auc)),
        a_auc_raw: mean_and_std(&collect(|r| r.metrics.a_auc_raw)),
        a_avg: mean_and_std(&collect(|r| r.metrics.a_avg)),
        f_last: mean_and_std(&collect(|r| r.metrics.f_last)),
    }
}

impl ResultsFile {
    pub fn new(config: ExperimentConfig, runs: Vec<RunResult>) -> Self {
        let aggregate = aggregate_runs(&runs);
        Self {
            schema_version: RESULTS_SCHEMA_VERSION,
            config,
            runs,
            aggregate,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        let file: ResultsFile = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        if file.schema_version != RESULTS_SCHEMA_VERSION {
            return Err(CliError::validation(format!(
                "{}: schema_version {} not supported (expected {})",
                path.display(),
                file.schema_version,
                RESULTS_SCHEMA_VERSION
            )));
        }
        Ok(file)
    }
}
