//! Any-time evaluation metrics.
//!
//! `a_auc` summarizes the accuracy-to-samples curve. The raw form sums
//! `point * delta_n` and therefore carries units of samples; the normalized
//! form divides by the total span so values are mean accuracies comparable
//! across query spacings, which is how results tables are reported.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Accuracies measured every `delta_n` streamed samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub delta_n: usize,
    pub points: Vec<f64>,
}

impl AccuracyCurve {
    pub fn new(delta_n: usize) -> Self {
        assert!(delta_n >= 1);
        Self {
            delta_n,
            points: Vec::new(),
        }
    }
}

/// Mean accuracy over the curve: raw AUC divided by the sampled span.
pub fn a_auc(curve: &AccuracyCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(CoreError::EmptyInput("accuracy curve"));
    }
    Ok(curve.points.iter().sum::<f64>() / curve.points.len() as f64)
}

/// Unnormalized area: sum of point * delta_n, in units of samples.
pub fn a_auc_raw(curve: &AccuracyCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(CoreError::EmptyInput("accuracy curve"));
    }
    Ok(curve.points.iter().sum::<f64>() * curve.delta_n as f64)
}

/// Mean of the per-task end accuracies.
pub fn a_avg(task_accuracies: &[f64]) -> Result<f64> {
    if task_accuracies.is_empty() {
        return Err(CoreError::EmptyInput("task accuracies"));
    }
    Ok(task_accuracies.iter().sum::<f64>() / task_accuracies.len() as f64)
}

/// Per-class accuracy trajectories, recorded at every evaluation point from
/// the moment the class is first seen in the stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAccHistory {
    pub per_class: BTreeMap<usize, Vec<f64>>,
}

impl ClassAccHistory {
    pub fn record(&mut self, class: usize, accuracy: f64) {
        self.per_class.entry(class).or_default().push(accuracy);
    }
}

/// Class-wise forgetting: mean over classes of (best accuracy - final
/// accuracy), where best ranges over every evaluation point.
pub fn f_last(history: &ClassAccHistory) -> Result<f64> {
    if history.per_class.is_empty() {
        return Err(CoreError::EmptyInput("class accuracy history"));
    }
    let mut total = 0.0;
    for (class, series) in &history.per_class {
        if series.is_empty() {
            return Err(CoreError::InvalidSpec(format!(
                "class {class} has no accuracy measurements"
            )));
        }
        let best = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += best - series.last().unwrap();
    }
    Ok(total / history.per_class.len() as f64)
}
