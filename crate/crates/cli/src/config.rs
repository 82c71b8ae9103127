//! Experiment configuration: one JSON document drives dataset construction,
//! split building, training, and evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clib_core::model::OptimizerKind;
use clib_core::scheduler::SchedulerKind;
use clib_core::stream::SplitSpec;
use clib_core::trainer::{EvalPopulation, MemoryPolicy, MemoryUsage, TrainConfig};

use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSection {
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

/// Either inline split parameters or a previously saved split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSection {
    Inline(SplitSpec),
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Clib,
    ErBaseline,
    Custom,
}

/// Training section: a method preset plus optional field overrides, which
/// is how the single-component ablations are expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_policy: Option<MemoryPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_usage: Option<MemoryUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedulerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub updates_per_sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance_every_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_hist_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_reset_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_lr_trace: Option<bool>,
}

impl TrainSection {
    pub fn preset(method: Method) -> Self {
        Self {
            method,
            memory_policy: None,
            memory_usage: None,
            scheduler: None,
            batch_size: None,
            updates_per_sample: None,
            capacity: None,
            lambda: None,
            importance_every_k: None,
            optimizer: None,
            lr0: None,
            adaptive_gamma: None,
            adaptive_hist_len: None,
            adaptive_alpha: None,
            exp_reset_gamma: None,
            hidden_layers: None,
            record_lr_trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub delta_n: usize,
    pub population: EvalPopulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSection,
    pub split: SplitSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::runtime(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::validation(format!(
                "schema_version must be {CONFIG_SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        match &self.dataset {
            DatasetSection::Synthetic {
                classes,
                dim,
                per_class,
                spread,
                ..
            } => {
                if *classes < 2 {
                    return Err(CliError::validation("dataset.classes must be >= 2".into()));
                }
                if *dim < 2 {
                    return Err(CliError::validation("dataset.dim must be >= 2".into()));
                }
                if *per_class < 2 {
                    return Err(CliError::validation("dataset.per_class must be >= 2".into()));
                }
                if !spread.is_finite() || *spread < 0.0 {
                    return Err(CliError::validation(format!(
                        "dataset.spread must be >= 0, got {spread}"
                    )));
                }
            }
            DatasetSection::Csv { path } => {
                if path.as_os_str().is_empty() {
                    return Err(CliError::validation("dataset.path must not be empty".into()));
                }
            }
        }
        if let SplitSection::Inline(spec) = &self.split {
            spec.validate().map_err(CliError::from_core_validation)?;
        }
        if self.eval.delta_n < 1 {
            return Err(CliError::validation("eval.delta_n must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::validation("seeds must list at least one seed".into()));
        }
        // Resolving exercises the full range checks on the training fields.
        self.resolve_train_config(self.seeds[0])?;
        Ok(())
    }

    /// Materialize the per-run training configuration for one replicate.
    pub fn resolve_train_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = &self.train;
        let mut config = match t.method {
            Method::Clib | Method::Custom => TrainConfig::clib(500, 16, seed),
            Method::ErBaseline => TrainConfig::er_baseline(500, 16, seed),
        };
        if let Some(v) = t.memory_policy {
            config.memory_policy = v;
        }
        if let Some(v) = t.memory_usage {
            config.memory_usage = v;
        }
        if let Some(v) = t.scheduler {
            config.scheduler = v;
        }
        if let Some(v) = t.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = t.updates_per_sample {
            config.updates_per_sample = v;
        }
        if let Some(v) = t.capacity {
            config.capacity = v;
        }
        if let Some(v) = t.lambda {
            config.lambda = v;
        }
        if let Some(v) = t.importance_every_k {
            config.importance_every_k = v;
        }
        if let Some(v) = t.optimizer {
            config.optimizer = v;
        }
        if let Some(v) = t.lr0 {
            config.lr0 = v;
        }
        if let Some(v) = t.adaptive_gamma {
            config.adaptive_gamma = v;
        }
        if let Some(v) = t.adaptive_hist_len {
            config.adaptive_hist_len = v;
        }
        if let Some(v) = t.adaptive_alpha {
            config.adaptive_alpha = v;
        }
        if let Some(v) = t.exp_reset_gamma {
            config.exp_reset_gamma = v;
        }
        if let Some(v) = &t.hidden_layers {
            config.hidden_layers = v.clone();
        }
        if let Some(v) = t.record_lr_trace {
            config.record_lr_trace = v;
        }
        config.delta_n = self.eval.delta_n;
        config.eval_population = self.eval.population;
        config.validate().map_err(CliError::from_core_validation)?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: 1,
            dataset: DatasetSection::Synthetic {
                classes: 10,
                dim: 16,
                per_class: 200,
                spread: 0.75,
                seed: 7,
            },
            split: SplitSection::Inline(SplitSpec {
                n_disjoint_pct: 50,
                blurry_level: 10,
                num_tasks: 5,
                seed: 11,
            }),
            train: TrainSection::preset(Method::Clib),
            eval: EvalSection {
                delta_n: 100,
                population: EvalPopulation::SeenClasses,
            },
            output_dir: PathBuf::from("out"),
            seeds: vec![1, 2, 3],
        }
    }

    #[test]
    fn config_round_trips_through_render_and_parse() {
        let config = sample_config();
        let text = config.render();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn out_of_range_split_field_is_named_in_the_error() {
        let mut config = sample_config();
        config.split = SplitSection::Inline(SplitSpec {
            n_disjoint_pct: 150,
            blurry_level: 10,
            num_tasks: 5,
            seed: 1,
        });
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("N"), "message: {err}");
        assert!(err.is_validation());
    }

    #[test]
    fn method_presets_resolve_to_the_expected_axes() {
        let mut config = sample_config();
        let clib = config.resolve_train_config(1).unwrap();
        assert_eq!(clib.memory_policy, MemoryPolicy::Importance);
        assert_eq!(clib.memory_usage, MemoryUsage::MemoryOnly);
        assert_eq!(clib.scheduler, SchedulerKind::Adaptive);

        config.train.method = Method::ErBaseline;
        let er = config.resolve_train_config(1).unwrap();
        assert_eq!(er.memory_policy, MemoryPolicy::Reservoir);
        assert_eq!(er.memory_usage, MemoryUsage::JointEr);
        assert_eq!(er.scheduler, SchedulerKind::ExpReset);
    }

    #[test]
    fn ablation_overrides_replace_single_axes() {
        let mut config = sample_config();
        config.train.scheduler = Some(SchedulerKind::ExpReset);
        let ablated = config.resolve_train_config(1).unwrap();
        assert_eq!(ablated.memory_policy, MemoryPolicy::Importance);
        assert_eq!(ablated.memory_usage, MemoryUsage::MemoryOnly);
        assert_eq!(ablated.scheduler, SchedulerKind::ExpReset);
    }

    #[test]
    fn invalid_joint_er_batch_size_is_rejected() {
        let mut config = sample_config();
        config.train.method = Method::ErBaseline;
        config.train.batch_size = Some(7);
        let err = config.validate().unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("batch_size"));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let mut config = sample_config();
        config.seeds.clear();
        assert!(config.validate().is_err());
    }
}
