//! Linking compiled programs with trainable networks on a synthetic
//! conditional classification task.
//!
//! Each input of a pair is drawn from one of two Gaussian clusters standing
//! for even and odd digits; the label is a boolean function of the two
//! parities. Four model kinds ([`ModelKind`]) solve the task with more or less
//! compiled structure, and [`run_experiment`] trains them over a sweep of
//! learning rates, batch sizes and seeds.

mod data;
mod metrics;
mod model;
mod task;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{gen_task_data, DataConfig, Split, SyntheticDataset, NO, YES};
pub use metrics::{
    export_metrics, metrics_csv, parse_metrics_csv, plot_svg, read_metrics_csv, Curve, Exported, MetricSeries, Summary,
    SummaryGroup,
};
pub use model::{accuracy, build_model, evaluate, train, Model, ModelConfig, ModelKind};
pub use task::{church_bool, church_value, Task};

use crate::compile::CompileError;
use crate::link::LinkError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How long each configuration trains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Steps(usize),
    /// Passes over the training split; smaller batches take more steps.
    Epochs(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    pub lrs: Vec<f64>,
    pub batches: Vec<usize>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
    pub eval_every: usize,
    pub hidden: usize,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    /// Two learning rates × two batch sizes × five seeds, 2000 steps each.
    fn default() -> Self {
        ExperimentConfig {
            models: ModelKind::ALL.to_vec(),
            lrs: vec![1e-3, 1e-2],
            batches: vec![32, 128],
            seeds: (0..5).collect(),
            budget: Budget::Steps(2000),
            eval_every: 100,
            hidden: 32,
            data: DataConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The single configuration used for headline comparisons.
    pub fn defaults() -> Self {
        ExperimentConfig { lrs: vec![DEFAULT_LR], batches: vec![DEFAULT_BATCH], ..ExperimentConfig::default() }
    }

    /// Four learning rates × four batch sizes, ten epochs per configuration.
    pub fn full() -> Self {
        ExperimentConfig {
            lrs: vec![1e-4, 1e-3, 3e-3, 1e-2],
            batches: vec![16, 32, 64, 128],
            budget: Budget::Epochs(10),
            ..ExperimentConfig::default()
        }
    }

    pub fn steps_for(&self, batch: usize) -> usize {
        match self.budget {
            Budget::Steps(n) => n,
            Budget::Epochs(e) => (e * self.data.train).div_ceil(batch.max(1)),
        }
    }

    /// One model configuration per `(model, lr, batch, seed)`, in that nesting order.
    pub fn model_configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &kind in &self.models {
            for &lr in &self.lrs {
                for &batch in &self.batches {
                    for &seed in &self.seeds {
                        out.push(ModelConfig {
                            kind,
                            input_dim: self.data.dim,
                            hidden: self.hidden,
                            lr,
                            batch,
                            seed,
                            steps: self.steps_for(batch),
                            eval_every: self.eval_every,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.models.is_empty() || self.lrs.is_empty() || self.batches.is_empty() || self.seeds.is_empty() {
            return Err(ExperimentError::Config(
                "models, learning rates, batch sizes and seeds must be non-empty".into(),
            ));
        }
        self.model_configs().iter().try_for_each(ModelConfig::validate)
    }
}

pub const DEFAULT_LR: f64 = 3e-3;
pub const DEFAULT_BATCH: usize = 32;

/// Trains every configuration of `cfg` on `task` in parallel. Curves come
/// back in [`ExperimentConfig::model_configs`] order.
pub fn run_experiment(task: Task, cfg: &ExperimentConfig) -> Result<MetricSeries, ExperimentError> {
    cfg.validate()?;
    let data = gen_task_data(task, &cfg.data)?;
    let curves = cfg
        .model_configs()
        .into_par_iter()
        .map(|mc| {
            train(&mc, &data).map(|points| Curve { model: mc.kind, lr: mc.lr, batch: mc.batch, seed: mc.seed, points })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricSeries { task, curves })
}

/// Trainable parameter count for each model kind under `cfg`.
pub fn param_counts(task: Task, cfg: &ExperimentConfig) -> Result<Vec<(ModelKind, usize)>, ExperimentError> {
    cfg.models
        .iter()
        .map(|&kind| {
            let mc = ModelConfig {
                kind,
                input_dim: cfg.data.dim,
                hidden: cfg.hidden,
                lr: DEFAULT_LR,
                batch: DEFAULT_BATCH,
                seed: 0,
                steps: 0,
                eval_every: 1,
            };
            build_model(&mc, task).map(|m| (kind, m.param_count()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            models: vec![ModelKind::I, ModelKind::D],
            lrs: vec![1e-2],
            batches: vec![16],
            seeds: vec![0, 1],
            budget: Budget::Steps(40),
            eval_every: 20,
            hidden: 8,
            data: DataConfig { train: 200, test: 100, ..DataConfig::default() },
        }
    }

    #[test]
    fn sweep_order_and_shape() {
        let s = run_experiment(Task::Xor, &tiny()).unwrap();
        let keys: Vec<_> = s.curves.iter().map(|c| (c.model, c.seed)).collect();
        assert_eq!(keys, vec![(ModelKind::I, 0), (ModelKind::I, 1), (ModelKind::D, 0), (ModelKind::D, 1)]);
        for c in &s.curves {
            assert_eq!(c.points.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 20, 40]);
            assert!(c.points.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        }
        assert_eq!(s, run_experiment(Task::Xor, &tiny()).unwrap());
    }

    #[test]
    fn epoch_budget_scales_with_batch() {
        let cfg = ExperimentConfig::full();
        assert_eq!(cfg.steps_for(16), 10 * 2000 / 16);
        assert_eq!(cfg.steps_for(128), (10 * 2000usize).div_ceil(128));
        assert_eq!(cfg.model_configs().len(), 4 * 4 * 4 * 5);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny();
        cfg.lrs = vec![];
        assert!(run_experiment(Task::Eq, &cfg).is_err());
        let mut cfg = tiny();
        cfg.batches = vec![0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parameter_counts_are_reported() {
        let counts = param_counts(Task::Eq, &ExperimentConfig::default()).unwrap();
        assert_eq!(counts.len(), 4);
        assert!(counts.iter().all(|(_, n)| *n > 0));
    }
}
