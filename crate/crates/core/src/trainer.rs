//! Online training loops with any-time evaluation.
//!
//! Two loop shapes, selected by `memory_usage`:
//!
//! - memory-only: every streamed sample is admitted to the episodic memory,
//!   then each of the `u` updates per sample trains on a batch drawn purely
//!   from memory. Streamed features reach the optimizer only through a
//!   memory slot.
//! - joint ER: batch_size/2 streamed samples accumulate in a staging buffer
//!   (each also offered to the memory); once staged, `staged * u` updates
//!   run on batches of the fixed staged half plus a freshly drawn memory
//!   half.
//!
//! Task ids and boundary flags never reach a training decision: they feed
//! the per-task accuracy record and nothing else. Given (seed, config,
//! split), a run is bit-reproducible.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::memory::{importance_memory_update, memory_loss, EpisodicMemory, SampleRef};
use crate::metrics::{self, AccuracyCurve, ClassAccHistory};
use crate::model::{self, MlpParams, OptimizerKind, OptimizerState};
use crate::numerics::RngState;
use crate::scheduler::{AdaptiveLrState, ConstantLr, ExpResetState, LrScheduler, SchedulerKind};
use crate::stream::{stream_iter, Dataset, StreamEvent, TaskSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryPolicy {
    Importance,
    Reservoir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryUsage {
    MemoryOnly,
    JointEr,
}

/// Which test samples an any-time query scores against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPopulation {
    /// Test samples of classes observed in the stream so far (default).
    SeenClasses,
    /// The full test set regardless of what has streamed.
    FullTestSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub memory_policy: MemoryPolicy,
    pub memory_usage: MemoryUsage,
    pub scheduler: SchedulerKind,
    pub batch_size: usize,
    pub updates_per_sample: usize,
    pub capacity: usize,
    /// Importance update coefficient.
    pub lambda: f64,
    /// Run the importance update every k model updates.
    pub importance_every_k: usize,
    pub optimizer: OptimizerKind,
    pub lr0: f64,
    pub adaptive_gamma: f64,
    pub adaptive_hist_len: usize,
    pub adaptive_alpha: f64,
    pub exp_reset_gamma: f64,
    pub hidden_layers: Vec<usize>,
    /// Streamed samples between any-time accuracy queries.
    pub delta_n: usize,
    pub eval_population: EvalPopulation,
    pub record_lr_trace: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Full method: importance memory, memory-only batches, adaptive LR.
    pub fn clib(capacity: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            memory_policy: MemoryPolicy::Importance,
            memory_usage: MemoryUsage::MemoryOnly,
            scheduler: SchedulerKind::Adaptive,
            batch_size,
            updates_per_sample: 1,
            capacity,
            lambda: 0.1,
            importance_every_k: 1,
            optimizer: OptimizerKind::Adam,
            lr0: 3e-4,
            adaptive_gamma: 0.95,
            adaptive_hist_len: 10,
            adaptive_alpha: 0.05,
            exp_reset_gamma: 0.9999,
            hidden_layers: vec![64, 64],
            delta_n: 100,
            eval_population: EvalPopulation::SeenClasses,
            record_lr_trace: false,
            seed,
        }
    }

    /// Baseline: reservoir memory, joint ER batches, exp-reset LR.
    pub fn er_baseline(capacity: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            memory_policy: MemoryPolicy::Reservoir,
            memory_usage: MemoryUsage::JointEr,
            scheduler: SchedulerKind::ExpReset,
            ..Self::clib(capacity, batch_size, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CoreError::InvalidSpec(msg));
        if self.batch_size < 1 {
            return fail("train.batch_size must be >= 1".into());
        }
        if self.memory_usage == MemoryUsage::JointEr
            && (self.batch_size < 2 || !self.batch_size.is_multiple_of(2))
        {
            return fail(format!(
                "train.batch_size must be even and >= 2 for joint ER (half streamed, half memory), got {}",
                self.batch_size
            ));
        }
        if self.updates_per_sample < 1 {
            return fail("train.updates_per_sample must be >= 1".into());
        }
        if self.capacity < 1 {
            return fail("train.capacity must be >= 1".into());
        }
        if self.lambda <= 0.0 {
            return fail(format!("train.lambda must be > 0, got {}", self.lambda));
        }
        if self.importance_every_k < 1 {
            return fail("train.importance_every_k must be >= 1".into());
        }
        if self.lr0 <= 0.0 {
            return fail(format!("train.lr0 must be > 0, got {}", self.lr0));
        }
        if !(self.adaptive_gamma > 0.0 && self.adaptive_gamma < 1.0) {
            return fail(format!(
                "train.adaptive_gamma must be in (0, 1), got {}",
                self.adaptive_gamma
            ));
        }
        if self.adaptive_hist_len < 2 {
            return fail("train.adaptive_hist_len must be >= 2".into());
        }
        if !(self.adaptive_alpha > 0.0 && self.adaptive_alpha < 0.5) {
            return fail(format!(
                "train.adaptive_alpha must be in (0, 0.5), got {}",
                self.adaptive_alpha
            ));
        }
        if !(self.exp_reset_gamma > 0.0 && self.exp_reset_gamma <= 1.0) {
            return fail(format!(
                "train.exp_reset_gamma must be in (0, 1], got {}",
                self.exp_reset_gamma
            ));
        }
        if self.delta_n < 1 {
            return fail("eval.delta_n must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrTracePoint {
    pub update: u64,
    pub lr: f64,
    pub eta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub a_auc: f64,
    pub a_auc_raw: f64,
    pub a_avg: f64,
    pub f_last: f64,
    pub delta_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: TrainConfig,
    pub curve: AccuracyCurve,
    pub task_accuracies: Vec<f64>,
    pub class_acc_history: ClassAccHistory,
    pub metrics: RunMetrics,
    pub lr_trace: Vec<LrTracePoint>,
    pub total_updates: u64,
    pub wall_time_secs: f64,
}

impl RunResult {
    /// Copy with the wall-time field cleared, for byte-level comparisons.
    pub fn with_zero_wall_time(mut self) -> Self {
        self.wall_time_secs = 0.0;
        self
    }
}

/// Accuracy over test samples of the given classes; predictions range over
/// every logit, so the model may name an unseen class and be scored wrong.
pub fn evaluate_any_time(
    params: &MlpParams,
    dataset: &Dataset,
    seen_classes: &BTreeSet<usize>,
) -> Result<f64> {
    if seen_classes.is_empty() {
        return Err(CoreError::EmptyInput("seen class set"));
    }
    let indices: Vec<usize> = dataset
        .test
        .iter()
        .enumerate()
        .filter(|(_, s)| seen_classes.contains(&s.label))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(CoreError::EmptyInput("test samples for seen classes"));
    }
    let batch = dataset.test_batch(&indices);
    model::evaluate_accuracy(params, &batch)
}

/// Bookkeeping for the any-time protocol: curve points every delta_n
/// samples, per-task accuracies at boundary flags, and per-class accuracy
/// trajectories for the forgetting metric.
struct EvalRecorder<'a> {
    dataset: &'a Dataset,
    delta_n: usize,
    population: EvalPopulation,
    seen: BTreeSet<usize>,
    curve: AccuracyCurve,
    task_accuracies: Vec<f64>,
    class_history: ClassAccHistory,
}

impl<'a> EvalRecorder<'a> {
    fn new(dataset: &'a Dataset, delta_n: usize, population: EvalPopulation) -> Self {
        Self {
            dataset,
            delta_n,
            population,
            seen: BTreeSet::new(),
            curve: AccuracyCurve::new(delta_n),
            task_accuracies: Vec::new(),
            class_history: ClassAccHistory::default(),
        }
    }

    fn on_sample(&mut self, label: usize) {
        self.seen.insert(label);
    }

    fn at_event(&mut self, event: &StreamEvent, params: &MlpParams) -> Result<()> {
        let curve_due = event.stream_index.is_multiple_of(self.delta_n);
        if !curve_due && event.tasks_ending == 0 {
            return Ok(());
        }
        let (overall, per_class) = self.evaluate(params)?;
        if curve_due {
            self.curve.points.push(overall);
            for (class, acc) in per_class {
                self.class_history.record(class, acc);
            }
        }
        for _ in 0..event.tasks_ending {
            self.task_accuracies.push(overall);
        }
        Ok(())
    }

    /// One prediction pass over the evaluation population, aggregated both
    /// overall and per seen class.
    fn evaluate(&self, params: &MlpParams) -> Result<(f64, Vec<(usize, f64)>)> {
        let indices: Vec<usize> = match self.population {
            EvalPopulation::SeenClasses => self
                .dataset
                .test
                .iter()
                .enumerate()
                .filter(|(_, s)| self.seen.contains(&s.label))
                .map(|(i, _)| i)
                .collect(),
            EvalPopulation::FullTestSet => (0..self.dataset.test.len()).collect(),
        };
        if indices.is_empty() {
            return Err(CoreError::EmptyInput("evaluation population"));
        }
        let batch = self.dataset.test_batch(&indices);
        let preds = model::predict(params, &batch.features, batch.len())?;
        let mut correct_total = 0usize;
        let mut per_class_total: Vec<(usize, usize)> = Vec::new(); // (correct, count) by class
        per_class_total.resize(self.dataset.num_classes, (0, 0));
        for (pred, &label) in preds.iter().zip(&batch.labels) {
            per_class_total[label].1 += 1;
            if *pred == label {
                per_class_total[label].0 += 1;
                correct_total += 1;
            }
        }
        let overall = correct_total as f64 / batch.len() as f64;
        let per_class = self
            .seen
            .iter()
            .filter(|&&c| per_class_total[c].1 > 0)
            .map(|&c| {
                (
                    c,
                    per_class_total[c].0 as f64 / per_class_total[c].1 as f64,
                )
            })
            .collect();
        Ok((overall, per_class))
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    dataset: &'a Dataset,
    params: MlpParams,
    optimizer: OptimizerState,
    memory: EpisodicMemory,
    scheduler: LrScheduler,
    rng_memory: RngState,
    rng_batch: RngState,
    update_count: u64,
    lr_trace: Vec<LrTracePoint>,
}

impl<'a> Trainer<'a> {
    fn new(config: &'a TrainConfig, dataset: &'a Dataset) -> Self {
        let master = RngState::new(config.seed);
        let mut dims = vec![dataset.feature_dim];
        dims.extend_from_slice(&config.hidden_layers);
        dims.push(dataset.num_classes);
        let params = MlpParams::init(&dims, &mut master.fork("model-init"));
        let optimizer = OptimizerState::new(config.optimizer, &params);
        let scheduler = match config.scheduler {
            SchedulerKind::Constant => LrScheduler::Constant(ConstantLr::new(config.lr0)),
            SchedulerKind::ExpReset => {
                LrScheduler::ExpReset(ExpResetState::new(config.lr0, config.exp_reset_gamma))
            }
            SchedulerKind::Adaptive => LrScheduler::Adaptive(AdaptiveLrState::new(
                config.lr0,
                config.adaptive_gamma,
                config.adaptive_hist_len,
                config.adaptive_alpha,
            )),
        };
        Self {
            config,
            dataset,
            params,
            optimizer,
            memory: EpisodicMemory::new(config.capacity),
            scheduler,
            rng_memory: master.fork("memory"),
            rng_batch: master.fork("batch"),
            update_count: 0,
            lr_trace: Vec::new(),
        }
    }

    fn admit(&mut self, sample: SampleRef) -> Result<()> {
        match self.config.memory_policy {
            MemoryPolicy::Importance => {
                importance_memory_update(&mut self.memory, sample, &self.params, self.dataset)?;
            }
            MemoryPolicy::Reservoir => {
                self.memory.reservoir_update(sample, &mut self.rng_memory);
            }
        }
        Ok(())
    }

    /// One optimizer step on `train_indices`, followed by the importance
    /// update (when due) and the scheduler feedback, both driven by the
    /// post-update memory loss. `memory_slot_indices` are the slots whose
    /// samples were in the batch.
    fn one_update(&mut self, train_indices: &[usize], memory_slot_indices: &[usize]) -> Result<()> {
        let batch = self.dataset.train_batch(train_indices);
        let (_, grads) = model::backward(&self.params, &batch)?;
        let lr = self.scheduler.update_lr();
        model::optimizer_step(&mut self.params, &grads, &mut self.optimizer, lr)?;
        self.update_count += 1;
        if self.config.record_lr_trace {
            self.lr_trace.push(LrTracePoint {
                update: self.update_count,
                lr,
                eta_bar: self.scheduler.eta_bar(),
            });
        }

        let importance_due = self.config.memory_policy == MemoryPolicy::Importance
            && !memory_slot_indices.is_empty()
            && self.update_count.is_multiple_of(self.config.importance_every_k as u64);
        let l_cur = if importance_due || self.scheduler.needs_post_update_loss() {
            Some(memory_loss(&self.memory, &self.params, self.dataset)?)
        } else {
            None
        };
        if importance_due {
            // Deduplicate: oversampled batches can repeat a slot, and the
            // importance update treats the trained indices as a set.
            let mut unique = memory_slot_indices.to_vec();
            unique.sort_unstable();
            unique.dedup();
            self.memory
                .update_importance(l_cur.unwrap(), &unique, self.config.lambda)?;
        }
        self.scheduler.after_update(l_cur)?;
        Ok(())
    }

    fn memory_draw(&mut self, count: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let slot_indices = self.memory.sample_batch(count, &mut self.rng_batch)?;
        let train_indices = slot_indices
            .iter()
            .map(|&i| self.memory.slots()[i].sample.sample_index)
            .collect();
        Ok((slot_indices, train_indices))
    }

    fn finish(
        self,
        recorder: EvalRecorder<'_>,
        started: std::time::Instant,
    ) -> Result<RunResult> {
        let a_auc = metrics::a_auc(&recorder.curve)?;
        let a_auc_raw = metrics::a_auc_raw(&recorder.curve)?;
        let a_avg = metrics::a_avg(&recorder.task_accuracies)?;
        let f_last = metrics::f_last(&recorder.class_history)?;
        Ok(RunResult {
            config: self.config.clone(),
            metrics: RunMetrics {
                a_auc,
                a_auc_raw,
                a_avg,
                f_last,
                delta_n: recorder.curve.delta_n,
            },
            curve: recorder.curve,
            task_accuracies: recorder.task_accuracies,
            class_acc_history: recorder.class_history,
            lr_trace: self.lr_trace,
            total_updates: self.update_count,
            wall_time_secs: started.elapsed().as_secs_f64(),
        })
    }
}

fn check_run_inputs(
    config: &TrainConfig,
    schedule: &TaskSchedule,
    dataset: &Dataset,
) -> Result<()> {
    config.validate()?;
    dataset.validate()?;
    if schedule.stream.is_empty() {
        return Err(CoreError::EmptyInput("schedule stream"));
    }
    if schedule.stream.len() < config.delta_n {
        return Err(CoreError::InvalidSpec(format!(
            "eval.delta_n {} exceeds the stream length {}; no query point would exist",
            config.delta_n,
            schedule.stream.len()
        )));
    }
    Ok(())
}

/// Memory-only online loop: admit, then train purely from memory.
pub fn clib_train_stream(
    config: &TrainConfig,
    schedule: &TaskSchedule,
    dataset: &Dataset,
) -> Result<RunResult> {
    check_run_inputs(config, schedule, dataset)?;
    if config.memory_usage != MemoryUsage::MemoryOnly {
        return Err(CoreError::InvalidSpec(
            "clib_train_stream requires memory_usage = memory_only".into(),
        ));
    }
    let started = std::time::Instant::now();
    let mut trainer = Trainer::new(config, dataset);
    let mut recorder = EvalRecorder::new(dataset, config.delta_n, config.eval_population);

    for event in stream_iter(schedule) {
        let sample = &dataset.train[event.sample_index];
        recorder.on_sample(sample.label);
        trainer.scheduler.observe_label(sample.label);
        trainer.admit(SampleRef {
            sample_index: event.sample_index,
            label: sample.label,
        })?;
        for _ in 0..config.updates_per_sample {
            let (slot_indices, train_indices) = trainer.memory_draw(config.batch_size)?;
            trainer.one_update(&train_indices, &slot_indices)?;
        }
        recorder.at_event(&event, &trainer.params)?;
    }
    trainer.finish(recorder, started)
}

/// Joint experience-replay loop: staged streamed half plus fresh memory half.
pub fn er_train_stream(
    config: &TrainConfig,
    schedule: &TaskSchedule,
    dataset: &Dataset,
) -> Result<RunResult> {
    check_run_inputs(config, schedule, dataset)?;
    if config.memory_usage != MemoryUsage::JointEr {
        return Err(CoreError::InvalidSpec(
            "er_train_stream requires memory_usage = joint_er".into(),
        ));
    }
    let started = std::time::Instant::now();
    let mut trainer = Trainer::new(config, dataset);
    let mut recorder = EvalRecorder::new(dataset, config.delta_n, config.eval_population);
    let stage_size = config.batch_size / 2;
    let mut staged: Vec<usize> = Vec::with_capacity(stage_size);

    let run_stage = |trainer: &mut Trainer, staged: &[usize]| -> Result<()> {
        for _ in 0..staged.len() * config.updates_per_sample {
            // The streamed half stays fixed across the stage's updates; the
            // memory half is redrawn every update.
            let (slot_indices, memory_train) = trainer.memory_draw(config.batch_size / 2)?;
            let mut train_indices = staged.to_vec();
            train_indices.extend(memory_train);
            trainer.one_update(&train_indices, &slot_indices)?;
        }
        Ok(())
    };

    for event in stream_iter(schedule) {
        let sample = &dataset.train[event.sample_index];
        recorder.on_sample(sample.label);
        trainer.scheduler.observe_label(sample.label);
        trainer.admit(SampleRef {
            sample_index: event.sample_index,
            label: sample.label,
        })?;
        staged.push(event.sample_index);
        if staged.len() == stage_size {
            run_stage(&mut trainer, &staged)?;
            staged.clear();
        }
        recorder.at_event(&event, &trainer.params)?;
    }
    if !staged.is_empty() {
        // Partial tail stage: same updates-per-sample budget.
        run_stage(&mut trainer, &staged)?;
    }
    trainer.finish(recorder, started)
}

/// Dispatch on the configured memory usage.
pub fn run_train(
    config: &TrainConfig,
    schedule: &TaskSchedule,
    dataset: &Dataset,
) -> Result<RunResult> {
    match config.memory_usage {
        MemoryUsage::MemoryOnly => clib_train_stream(config, schedule, dataset),
        MemoryUsage::JointEr => er_train_stream(config, schedule, dataset),
    }
}
