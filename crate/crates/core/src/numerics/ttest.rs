//! One-sided two-sample Student's t-test over loss-decrease histories.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::special::betai;
use crate::error::{CoreError, Result};

/// Pooled-variance floor. Early in training both histories can be exactly
/// constant; flooring keeps the statistic finite and drives p toward 0 or 1.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Bounded FIFO of loss decreases; appending at capacity evicts the oldest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    values: VecDeque<f64>,
    max_len: usize,
}

impl LossHistory {
    pub fn new(max_len: usize) -> Self {
        assert!(max_len > 0, "history length must be positive");
        Self {
            values: VecDeque::with_capacity(max_len),
            max_len,
        }
    }

    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.max_len {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    pub fn clear(&mut self) {
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.len() == self.max_len
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.values.iter()
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance (n - 1 denominator).
    fn variance(&self) -> f64 {
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - mean).powi(2)).sum();
        ss / (self.values.len() - 1) as f64
    }
}

impl FromIterator<f64> for LossHistory {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let values: VecDeque<f64> = iter.into_iter().collect();
        assert!(!values.is_empty(), "cannot build an empty history");
        let max_len = values.len();
        Self { values, max_len }
    }
}

/// Survival function P(T >= t) of Student's t with `df` degrees of freedom.
///
/// Computed through the regularized incomplete beta:
/// for t >= 0, P(T >= t) = I_{df/(df+t^2)}(df/2, 1/2) / 2.
pub fn student_t_sf(t: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(CoreError::InvalidDegreesOfFreedom);
    }
    if t < 0.0 {
        return Ok(1.0 - student_t_sf(-t, df)?);
    }
    let dff = df as f64;
    let x = dff / (dff + t * t);
    Ok(0.5 * betai(dff / 2.0, 0.5, x))
}

/// One-sided two-sample t-test with alternative "mean(low) > mean(high)".
///
/// Uses the pooled-variance statistic with df = n_low + n_high - 2; the two
/// histories come from the same loss process with equal lengths, so the
/// equal-variance form applies. Returns P(T >= t_obs): small p means the low
/// learning rate decreased the loss significantly more than the high one.
pub fn t_test_one_sided(low: &LossHistory, high: &LossHistory) -> Result<f64> {
    for h in [low, high] {
        if h.len() < 2 {
            return Err(CoreError::HistoryTooShort {
                len: h.len(),
                required: 2,
            });
        }
    }
    let (n_low, n_high) = (low.len() as f64, high.len() as f64);
    let pooled = ((n_low - 1.0) * low.variance() + (n_high - 1.0) * high.variance())
        / (n_low + n_high - 2.0);
    let pooled = pooled.max(VARIANCE_FLOOR);
    let se = (pooled * (1.0 / n_low + 1.0 / n_high)).sqrt();
    let t = (low.mean() - high.mean()) / se;
    student_t_sf(t, low.len() + high.len() - 2)
}
