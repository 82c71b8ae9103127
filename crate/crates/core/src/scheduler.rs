//! Learning-rate state machines.
//!
//! Three policies: a constant rate, exponential decay that resets to the
//! initial value whenever a previously unseen class arrives, and the
//! adaptive scheme that alternates a high rate (base / gamma) with a low
//! rate (base * gamma), tracks the loss decrease each side achieves, and
//! moves the base by gamma^2 when a one-sided t-test says one side wins.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::numerics::{t_test_one_sided, LossHistory};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Adaptive,
    ExpReset,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLr {
    pub eta0: f64,
}

impl ConstantLr {
    pub fn new(eta0: f64) -> Self {
        assert!(eta0 > 0.0);
        Self { eta0 }
    }

    pub fn lr(&self) -> f64 {
        self.eta0
    }
}

/// Exponential decay with a reset on every newly observed class.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpResetState {
    eta0: f64,
    gamma: f64,
    steps_since_reset: u64,
    known_classes: BTreeSet<usize>,
}

impl ExpResetState {
    pub fn new(eta0: f64, gamma: f64) -> Self {
        assert!(eta0 > 0.0 && gamma > 0.0 && gamma <= 1.0);
        Self {
            eta0,
            gamma,
            steps_since_reset: 0,
            known_classes: BTreeSet::new(),
        }
    }

    /// Register a streamed label; a new class restarts the decay.
    pub fn observe_label(&mut self, label: usize) {
        if self.known_classes.insert(label) {
            self.steps_since_reset = 0;
        }
    }

    /// Rate the next model update should use.
    pub fn current_lr(&self) -> f64 {
        self.eta0 * self.gamma.powi(self.steps_since_reset as i32)
    }

    /// Consume one model update: returns the rate for it, then decays.
    pub fn next_lr(&mut self) -> f64 {
        let lr = self.current_lr();
        self.steps_since_reset += 1;
        lr
    }

    /// Observe a label and draw the rate for one update.
    pub fn step(&mut self, label: usize) -> f64 {
        self.observe_label(label);
        self.next_lr()
    }

    pub fn known_classes(&self) -> &BTreeSet<usize> {
        &self.known_classes
    }
}

/// Adaptive alternating scheduler state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveLrState {
    eta_bar: f64,
    eta: f64,
    gamma: f64,
    alpha: f64,
    hist_high: LossHistory,
    hist_low: LossHistory,
    l_before: Option<f64>,
}

impl AdaptiveLrState {
    /// Starts on the high side (base / gamma); the first step records no
    /// loss difference because there is nothing to compare against yet.
    pub fn new(eta_bar: f64, gamma: f64, hist_len: usize, alpha: f64) -> Self {
        assert!(eta_bar > 0.0);
        assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
        assert!(alpha > 0.0 && alpha < 0.5);
        Self {
            eta_bar,
            eta: eta_bar / gamma,
            gamma,
            alpha,
            hist_high: LossHistory::new(hist_len),
            hist_low: LossHistory::new(hist_len),
            l_before: None,
        }
    }

    /// Rate to apply to the next model update.
    pub fn current_lr(&self) -> f64 {
        self.eta
    }

    pub fn eta_bar(&self) -> f64 {
        self.eta_bar
    }

    pub fn histories(&self) -> (&LossHistory, &LossHistory) {
        (&self.hist_low, &self.hist_high)
    }

    /// Advance the state with the loss observed after the update that used
    /// `current_lr`. Records the loss decrease into the matching history,
    /// runs the t-test once both histories are full (shifting the base and
    /// clearing the histories on a significant outcome), then flips to the
    /// other side of the base. Returns the next rate.
    pub fn step(&mut self, l_cur: f64) -> Result<f64> {
        assert!(l_cur.is_finite(), "loss must be finite");
        if let Some(before) = self.l_before {
            let l_diff = before - l_cur;
            if self.eta > self.eta_bar {
                self.hist_high.push(l_diff);
            } else {
                self.hist_low.push(l_diff);
            }
        }
        self.l_before = Some(l_cur);

        if self.hist_high.is_full() && self.hist_low.is_full() {
            let p = t_test_one_sided(&self.hist_low, &self.hist_high)?;
            if p < self.alpha {
                // Low rate wins: lower the base.
                self.eta_bar *= self.gamma * self.gamma;
                self.hist_high.clear();
                self.hist_low.clear();
            } else if p > 1.0 - self.alpha {
                // High rate wins: raise the base.
                self.eta_bar /= self.gamma * self.gamma;
                self.hist_high.clear();
                self.hist_low.clear();
            }
        }

        self.eta = if self.eta > self.eta_bar {
            self.gamma * self.eta_bar
        } else {
            self.eta_bar / self.gamma
        };
        Ok(self.eta)
    }
}

/// Unified front the training loops drive.
#[derive(Debug, Clone, PartialEq)]
pub enum LrScheduler {
    Constant(ConstantLr),
    ExpReset(ExpResetState),
    Adaptive(AdaptiveLrState),
}

impl LrScheduler {
    /// Label side-channel; only the exp-reset policy reacts.
    pub fn observe_label(&mut self, label: usize) {
        if let LrScheduler::ExpReset(s) = self {
            s.observe_label(label);
        }
    }

    /// Rate for the next model update (decays exp-reset by one step).
    pub fn update_lr(&mut self) -> f64 {
        match self {
            LrScheduler::Constant(s) => s.lr(),
            LrScheduler::ExpReset(s) => s.next_lr(),
            LrScheduler::Adaptive(s) => s.current_lr(),
        }
    }

    /// Whether `after_update` needs the post-update memory loss.
    pub fn needs_post_update_loss(&self) -> bool {
        matches!(self, LrScheduler::Adaptive(_))
    }

    /// Feed back the loss measured after the update (adaptive only).
    pub fn after_update(&mut self, l_cur: Option<f64>) -> Result<()> {
        if let LrScheduler::Adaptive(s) = self {
            let l_cur = l_cur.expect("adaptive scheduler requires the post-update loss");
            s.step(l_cur)?;
        }
        Ok(())
    }

    /// Base rate for trace output; the non-adaptive policies report their
    /// current rate.
    pub fn eta_bar(&self) -> f64 {
        match self {
            LrScheduler::Constant(s) => s.lr(),
            LrScheduler::ExpReset(s) => s.current_lr(),
            LrScheduler::Adaptive(s) => s.eta_bar(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_never_moves() {
        let s = ConstantLr::new(3e-4);
        for _ in 0..1000 {
            assert_eq!(s.lr(), 3e-4);
        }
        assert_eq!(ConstantLr::new(3e-4).lr(), s.lr());
    }

    #[test]
    fn exp_reset_decays_per_update() {
        let mut s = ExpResetState::new(3e-4, 0.9999);
        s.observe_label(0);
        let mut emitted = Vec::new();
        for _ in 0..10 {
            emitted.push(s.next_lr());
        }
        for (k, lr) in emitted.iter().enumerate() {
            let expect = 3e-4 * 0.9999f64.powi(k as i32);
            assert!((lr - expect).abs() < 1e-18, "update {k}");
        }
        // After 10 updates the pending rate is eta0 * gamma^10.
        let expect = 3e-4 * 0.9999f64.powi(10);
        assert!((s.current_lr() - expect).abs() < 1e-18);
        assert!((s.current_lr() - 2.9970e-4).abs() < 1e-8);
    }

    #[test]
    fn exp_reset_restarts_on_new_class() {
        let mut s = ExpResetState::new(3e-4, 0.9999);
        for _ in 0..10 {
            s.step(0);
        }
        assert!(s.current_lr() < 3e-4);
        // Update 11 arrives with a new class: full rate again.
        let lr = s.step(1);
        assert_eq!(lr, 3e-4);
        // Re-observing a known class does not reset.
        let lr = s.step(0);
        assert!((lr - 3e-4 * 0.9999).abs() < 1e-18);
    }

    #[test]
    fn exp_reset_with_unit_gamma_is_constant() {
        let mut s = ExpResetState::new(3e-4, 1.0);
        for i in 0..100 {
            assert_eq!(s.step(i % 7), 3e-4);
        }
    }

    #[test]
    fn exp_reset_is_non_increasing_between_resets() {
        let mut s = ExpResetState::new(1e-2, 0.99);
        s.observe_label(0);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let lr = s.step(0);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn adaptive_alternates_around_the_base() {
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 10, 0.05);
        let high = 3e-4 / 0.95;
        let low = 3e-4 * 0.95;
        assert!((s.current_lr() - high).abs() < 1e-12);
        // Constant losses never fill both histories unevenly enough to move
        // the base, so the emitted rates strictly alternate.
        let mut expected_high = false; // first step() returns the low side
        for k in 0..40 {
            let lr = s.step(1.0).unwrap();
            let expect = if expected_high { high } else { low };
            assert!(
                (lr - expect).abs() < 1e-12,
                "step {k}: lr {lr}, expected {expect}"
            );
            expected_high = !expected_high;
        }
        assert!((s.eta_bar() - 3e-4).abs() < 1e-12);
    }

    #[test]
    fn adaptive_base_shift_and_history_reset_on_significance() {
        // hist_len 2 for brevity: feed two big decreases on the low side
        // and two near-zero decreases on the high side.
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 2, 0.05);
        // Step 1: applied high lr; first call records nothing.
        s.step(10.0).unwrap(); // -> low
        s.step(9.0).unwrap(); // low recorded +1.0 -> high
        s.step(9.0).unwrap(); // high recorded 0.0 -> low
        s.step(7.999).unwrap(); // low recorded +1.001 -> high
        // Next call records high 0.001, filling both histories; the t-test
        // is overwhelmingly in favor of low, so the base drops by gamma^2.
        s.step(7.998).unwrap();
        assert!(
            (s.eta_bar() - 3e-4 * 0.95 * 0.95).abs() < 1e-8,
            "eta_bar = {}",
            s.eta_bar()
        );
        assert!((s.eta_bar() - 2.7075e-4).abs() < 1e-8);
        let (low, high) = s.histories();
        assert!(low.is_empty() && high.is_empty());
    }

    #[test]
    fn adaptive_base_rises_when_high_wins() {
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 2, 0.05);
        s.step(10.0).unwrap();
        s.step(10.0).unwrap(); // low: 0.0
        s.step(9.0).unwrap(); // high: +1.0
        s.step(8.999).unwrap(); // low: +0.001
        s.step(7.998).unwrap(); // high: +1.001, test fires upward
        assert!(
            (s.eta_bar() - 3e-4 / (0.95 * 0.95)).abs() < 1e-8,
            "eta_bar = {}",
            s.eta_bar()
        );
        let (low, high) = s.histories();
        assert!(low.is_empty() && high.is_empty());
    }

    #[test]
    fn adaptive_symmetric_histories_leave_base_alone() {
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 2, 0.05);
        // Identical decreases on both sides: t = 0, p = 0.5, no branch.
        s.step(10.0).unwrap();
        s.step(9.5).unwrap(); // low: 0.5
        s.step(9.0).unwrap(); // high: 0.5
        s.step(8.5).unwrap(); // low: 0.5
        s.step(8.0).unwrap(); // high: 0.5; both full, p = 0.5
        assert_eq!(s.eta_bar(), 3e-4);
        let (low, high) = s.histories();
        // Histories are retained when the test is inconclusive.
        assert_eq!(low.len(), 2);
        assert_eq!(high.len(), 2);
    }

    #[test]
    fn adaptive_base_moves_only_by_gamma_squared_factors() {
        // Drive with a noisy-but-improving loss sequence and check the
        // log-spacing of consecutive base rates.
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 3, 0.05);
        let mut loss = 5.0;
        let mut prev_base = s.eta_bar();
        for k in 0..400 {
            loss = (loss - 0.01 * ((k % 7) as f64 - 2.0)).max(0.05);
            s.step(loss).unwrap();
            let base = s.eta_bar();
            let jump = (base.ln() - prev_base.ln()).abs();
            let unit = 2.0 * 0.95f64.ln().abs();
            assert!(
                jump < 1e-12 || (jump - unit).abs() < 1e-9,
                "step {k}: base jumped by factor {jump}"
            );
            if jump > 1e-12 {
                let (low, high) = s.histories();
                assert!(low.is_empty() && high.is_empty());
            }
            prev_base = base;
        }
    }

    #[test]
    fn histories_never_exceed_their_length() {
        let mut s = AdaptiveLrState::new(3e-4, 0.95, 4, 0.05);
        for k in 0..100 {
            s.step(1.0 + (k as f64 * 0.37).sin()).unwrap();
            let (low, high) = s.histories();
            assert!(low.len() <= 4 && high.len() <= 4);
        }
    }

    #[test]
    fn unified_front_dispatches_like_the_inner_states() {
        let mut a = LrScheduler::Adaptive(AdaptiveLrState::new(3e-4, 0.95, 10, 0.05));
        assert!(a.needs_post_update_loss());
        let lr0 = a.update_lr();
        assert!((lr0 - 3e-4 / 0.95).abs() < 1e-12);
        a.after_update(Some(1.0)).unwrap();
        assert!((a.update_lr() - 3e-4 * 0.95).abs() < 1e-12);

        let mut e = LrScheduler::ExpReset(ExpResetState::new(1e-3, 0.5));
        assert!(!e.needs_post_update_loss());
        e.observe_label(0);
        assert_eq!(e.update_lr(), 1e-3);
        assert_eq!(e.update_lr(), 5e-4);
        e.after_update(None).unwrap();

        let mut c = LrScheduler::Constant(ConstantLr::new(2e-3));
        assert_eq!(c.update_lr(), 2e-3);
        c.after_update(None).unwrap();
    }
}
