//! Datasets and the i-Blurry-N-M stream construction.
//!
//! A split partitions classes into a disjoint set (N% of classes, each bound
//! to a single task) and a blurry set (the rest). A blurry class places
//! (100 - M)% of its samples in its dominant task and spreads the remaining
//! M% uniformly over the other tasks. Task boundaries exist only as metadata
//! for evaluation; the training loops never see them.
//!
//! Rounding rules, chosen so published splits reproduce exactly:
//! - the disjoint class count is round-half-up of C * N / 100;
//! - disjoint classes and blurry dominance groups spread as evenly as
//!   possible over tasks, earlier tasks absorbing the remainder;
//! - a blurry class's dominant share is round-half-up of n * (100 - M) / 100,
//!   and the spillover is split over the other T - 1 tasks by largest
//!   remainder with earlier tasks taking the extras.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::Batch;
use crate::numerics::RngState;

pub const SPLIT_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(CoreError::EmptyInput("dataset train/test pools"));
        }
        for pool in [&self.train, &self.test] {
            for s in pool {
                if s.features.len() != self.feature_dim {
                    return Err(CoreError::ShapeMismatch {
                        what: "dataset feature vector",
                        expected: self.feature_dim,
                        got: s.features.len(),
                    });
                }
                if s.label >= self.num_classes {
                    return Err(CoreError::LabelOutOfRange {
                        label: s.label,
                        num_classes: self.num_classes,
                    });
                }
            }
        }
        for c in 0..self.num_classes {
            let in_train = self.train.iter().any(|s| s.label == c);
            let in_test = self.test.iter().any(|s| s.label == c);
            if !in_train || !in_test {
                return Err(CoreError::InvalidSpec(format!(
                    "class {c} missing from {}",
                    if in_train { "test" } else { "train" }
                )));
            }
        }
        Ok(())
    }

    /// Dense batch from train-pool indices (repeats allowed).
    pub fn train_batch(&self, indices: &[usize]) -> Batch {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(&self.train[i].features);
            labels.push(self.train[i].label);
        }
        Batch::new(features, labels, self.feature_dim)
    }

    /// Dense batch from test-pool indices.
    pub fn test_batch(&self, indices: &[usize]) -> Batch {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(&self.test[i].features);
            labels.push(self.test[i].label);
        }
        Batch::new(features, labels, self.feature_dim)
    }

    /// Train sample indices grouped by class.
    pub fn train_indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.train.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }

    /// Test sample indices grouped by class.
    pub fn test_indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.test.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Percentage of classes assigned to the disjoint set.
    #[serde(rename = "N")]
    pub n_disjoint_pct: u32,
    /// Blurry level: percentage of a blurry class's samples leaving its
    /// dominant task.
    #[serde(rename = "M")]
    pub blurry_level: u32,
    #[serde(rename = "T")]
    pub num_tasks: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_disjoint_pct > 100 {
            return Err(CoreError::InvalidSpec(format!(
                "split.N must be in [0, 100], got {}",
                self.n_disjoint_pct
            )));
        }
        if self.blurry_level > 100 {
            return Err(CoreError::InvalidSpec(format!(
                "split.M must be in [0, 100], got {}",
                self.blurry_level
            )));
        }
        if self.num_tasks == 0 {
            return Err(CoreError::InvalidSpec("split.T must be >= 1".into()));
        }
        Ok(())
    }
}

/// Class-to-task assignment: one group of class ids per task, for each of
/// the disjoint and blurry sets. Groups may be empty when there are more
/// tasks than classes in a set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub disjoint: Vec<Vec<usize>>,
    pub blurry: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn disjoint_classes(&self) -> BTreeSet<usize> {
        self.disjoint.iter().flatten().copied().collect()
    }

    pub fn blurry_classes(&self) -> BTreeSet<usize> {
        self.blurry.iter().flatten().copied().collect()
    }

    /// Task owning disjoint class `c`, if `c` is disjoint.
    pub fn task_of_disjoint(&self, c: usize) -> Option<usize> {
        self.disjoint.iter().position(|g| g.contains(&c))
    }

    /// Dominant task of blurry class `c`, if `c` is blurry.
    pub fn dominant_task_of(&self, c: usize) -> Option<usize> {
        self.blurry.iter().position(|g| g.contains(&c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub sample_index: usize,
    pub task_id: usize,
}

/// The ordered i-Blurry sample stream plus its construction metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub spec: SplitSpec,
    pub class_partition: ClassPartition,
    pub stream: Vec<StreamEntry>,
}

/// One streamed sample. `tasks_ending` counts how many task boundaries fall
/// immediately after this event; it exists for metric bookkeeping only and
/// must never influence a training decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamEvent {
    pub sample_index: usize,
    /// 1-based count of samples observed so far.
    pub stream_index: usize,
    pub tasks_ending: usize,
}

/// Split `C` classes into disjoint/blurry task groups.
///
/// The assignment starts from a seeded permutation of class ids, so which
/// classes are disjoint is itself part of the seeded split.
pub fn partition_classes(
    num_classes: usize,
    n_disjoint_pct: u32,
    num_tasks: usize,
    rng: &mut RngState,
) -> Result<ClassPartition> {
    if n_disjoint_pct > 100 {
        return Err(CoreError::InvalidSpec(format!(
            "N must be in [0, 100], got {n_disjoint_pct}"
        )));
    }
    if num_tasks == 0 {
        return Err(CoreError::InvalidSpec("T must be >= 1".into()));
    }
    let num_disjoint = (num_classes * n_disjoint_pct as usize + 50) / 100;
    let mut perm: Vec<usize> = (0..num_classes).collect();
    rng.shuffle(&mut perm);

    let spread = |classes: &[usize]| -> Vec<Vec<usize>> {
        let base = classes.len() / num_tasks;
        let rem = classes.len() % num_tasks;
        let mut groups = Vec::with_capacity(num_tasks);
        let mut offset = 0;
        for t in 0..num_tasks {
            let take = base + usize::from(t < rem);
            let mut group: Vec<usize> = classes[offset..offset + take].to_vec();
            group.sort_unstable();
            groups.push(group);
            offset += take;
        }
        groups
    };

    Ok(ClassPartition {
        disjoint: spread(&perm[..num_disjoint]),
        blurry: spread(&perm[num_disjoint..]),
    })
}

/// Build the full i-Blurry-N-M schedule for `dataset`.
pub fn build_iblurry_split(dataset: &Dataset, spec: &SplitSpec) -> Result<TaskSchedule> {
    spec.validate()?;
    dataset.validate()?;
    let master = RngState::new(spec.seed);
    let partition = partition_classes(
        dataset.num_classes,
        spec.n_disjoint_pct,
        spec.num_tasks,
        &mut master.fork("class-permutation"),
    )?;

    let mut by_class = dataset.train_indices_by_class();
    for (c, indices) in by_class.iter_mut().enumerate() {
        master.fork(&format!("class-order-{c}")).shuffle(indices);
    }

    let num_tasks = spec.num_tasks;
    let mut tasks: Vec<Vec<usize>> = vec![Vec::new(); num_tasks];

    for (t, group) in partition.disjoint.iter().enumerate() {
        for &c in group {
            tasks[t].extend_from_slice(&by_class[c]);
        }
    }

    for (dominant_task, group) in partition.blurry.iter().enumerate() {
        for &c in group {
            let samples = &by_class[c];
            let n = samples.len();
            let dominant_count = if num_tasks == 1 {
                n
            } else {
                (n * (100 - spec.blurry_level) as usize + 50) / 100
            };
            tasks[dominant_task].extend_from_slice(&samples[..dominant_count]);
            let spill = n - dominant_count;
            if spill > 0 {
                let others = num_tasks - 1;
                let base = spill / others;
                let rem = spill % others;
                let mut offset = dominant_count;
                let mut k = 0;
                for (t, task) in tasks.iter_mut().enumerate() {
                    if t == dominant_task {
                        continue;
                    }
                    let take = base + usize::from(k < rem);
                    task.extend_from_slice(&samples[offset..offset + take]);
                    offset += take;
                    k += 1;
                }
            }
        }
    }

    for (t, task) in tasks.iter_mut().enumerate() {
        master.fork(&format!("task-shuffle-{t}")).shuffle(task);
    }

    let stream = tasks
        .iter()
        .enumerate()
        .flat_map(|(t, samples)| {
            samples.iter().map(move |&sample_index| StreamEntry {
                sample_index,
                task_id: t,
            })
        })
        .collect();

    Ok(TaskSchedule {
        spec: *spec,
        class_partition: partition,
        stream,
    })
}

impl TaskSchedule {
    /// Classes exposed in each task's stream segment.
    pub fn task_exposure_sets(&self, dataset: &Dataset) -> Vec<BTreeSet<usize>> {
        let mut sets = vec![BTreeSet::new(); self.spec.num_tasks];
        for e in &self.stream {
            sets[e.task_id].insert(dataset.train[e.sample_index].label);
        }
        sets
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct SplitFileOut<'a> {
            version: u32,
            spec: &'a SplitSpec,
            class_partition: &'a ClassPartition,
            stream: &'a [StreamEntry],
        }
        let doc = SplitFileOut {
            version: SPLIT_FILE_VERSION,
            spec: &self.spec,
            class_partition: &self.class_partition,
            stream: &self.stream,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct SplitFileIn {
            version: u32,
            spec: SplitSpec,
            class_partition: ClassPartition,
            stream: Vec<StreamEntry>,
        }
        let text = std::fs::read_to_string(path)?;
        let doc: SplitFileIn = serde_json::from_str(&text)?;
        if doc.version != SPLIT_FILE_VERSION {
            return Err(CoreError::UnsupportedVersion {
                found: doc.version,
                supported: SPLIT_FILE_VERSION,
            });
        }
        Ok(TaskSchedule {
            spec: doc.spec,
            class_partition: doc.class_partition,
            stream: doc.stream,
        })
    }
}

/// One-at-a-time iteration over the schedule with boundary side-channel.
pub fn stream_iter(schedule: &TaskSchedule) -> impl Iterator<Item = StreamEvent> + '_ {
    // End position of each task: the index of its last entry, with empty
    // tasks collapsing onto the previous boundary (clamped to the first
    // event so every task boundary is reported exactly once).
    let mut counts = vec![0usize; schedule.spec.num_tasks];
    for e in &schedule.stream {
        counts[e.task_id] += 1;
    }
    let mut ends = vec![0usize; schedule.spec.num_tasks];
    let mut cum = 0usize;
    for (t, &c) in counts.iter().enumerate() {
        cum += c;
        ends[t] = cum.max(1) - 1;
    }
    schedule.stream.iter().enumerate().map(move |(i, e)| StreamEvent {
        sample_index: e.sample_index,
        stream_index: i + 1,
        tasks_ending: ends.iter().filter(|&&p| p == i).count(),
    })
}

/// Gaussian-cluster synthetic dataset: class means uniform in [-1, 1]^dim,
/// samples mean + spread * standard normal, 80/20 train/test per class.
pub fn synth_dataset(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    rng: &mut RngState,
) -> Dataset {
    assert!(num_classes >= 2 && dim >= 2 && per_class >= 2);
    assert!(spread >= 0.0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let train_count = (per_class * 4 / 5).clamp(1, per_class - 1);
    for label in 0..num_classes {
        let mean: Vec<f64> = (0..dim).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
        for i in 0..per_class {
            let features: Vec<f64> = mean
                .iter()
                .map(|m| m + spread * rng.next_normal())
                .collect();
            let sample = LabeledSample { features, label };
            if i < train_count {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Dataset {
        name: format!("synth-c{num_classes}-d{dim}"),
        num_classes,
        feature_dim: dim,
        train,
        test,
    }
}

/// Parse a CSV of `label, f1, ..., fd` rows (optional header) into a dataset
/// with labels remapped to contiguous ids preserving numeric order. The
/// same 80/20 per-class split as `synth_dataset` applies, in file order.
pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(usize, i64, Vec<f64>)> = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let label = match cells[0].parse::<i64>() {
            Ok(l) => l,
            Err(_) if rows.is_empty() && row == 1 => continue, // header
            Err(_) => {
                return Err(CoreError::CsvParse {
                    row,
                    message: format!("label {:?} is not an integer", cells[0]),
                })
            }
        };
        if cells.len() < 2 {
            return Err(CoreError::CsvParse {
                row,
                message: "row has no feature columns".into(),
            });
        }
        let features: Vec<f64> = cells[1..]
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|_| CoreError::CsvParse {
                    row,
                    message: format!("feature {c:?} is not a number"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(d) = dim {
            if features.len() != d {
                return Err(CoreError::CsvParse {
                    row,
                    message: format!("expected {d} features, got {}", features.len()),
                });
            }
        } else {
            dim = Some(features.len());
        }
        rows.push((row, label, features));
    }
    if rows.is_empty() {
        return Err(CoreError::EmptyInput("csv dataset"));
    }

    let mut distinct: Vec<i64> = rows.iter().map(|r| r.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let remap = |l: i64| distinct.binary_search(&l).unwrap();

    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); distinct.len()];
    for (_, label, features) in rows {
        by_class[remap(label)].push(features);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, samples) in by_class.into_iter().enumerate() {
        if samples.len() < 2 {
            return Err(CoreError::InvalidSpec(format!(
                "class {} needs at least 2 rows to split train/test",
                distinct[label]
            )));
        }
        let train_count = (samples.len() * 4 / 5).clamp(1, samples.len() - 1);
        for (i, features) in samples.into_iter().enumerate() {
            let sample = LabeledSample { features, label };
            if i < train_count {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let dataset = Dataset {
        name,
        num_classes: distinct.len(),
        feature_dim: dim.unwrap(),
        train,
        test,
    };
    dataset.validate()?;
    Ok(dataset)
}
