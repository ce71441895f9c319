use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelDims};

/// Per-task batch size, skip period and loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSchedule {
    pub batch_size: usize,
    /// The task contributes a batch on iterations divisible by `period`.
    #[serde(default = "one")]
    pub period: usize,
    #[serde(default)]
    pub loss_weights: LossWeights,
}

fn one() -> usize {
    1
}

/// Hidden layer widths used when a model is built from a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelLayout {
    pub backbone_dims: Vec<usize>,
    pub module_dims: Vec<usize>,
}

impl Default for ModelLayout {
    fn default() -> Self {
        ModelLayout {
            backbone_dims: vec![16],
            module_dims: vec![16, 16, 16],
        }
    }
}

impl ModelLayout {
    pub fn dims(&self, input_dim: usize, class_counts: Vec<usize>) -> ModelDims {
        ModelDims {
            input_dim,
            backbone_dims: self.backbone_dims.clone(),
            module_dims: self.module_dims.clone(),
            class_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub tasks: Vec<TaskSchedule>,
    #[serde(default)]
    pub seed: u64,
    /// Off by default; with zero momentum and decay every update is exactly
    /// the averaged-gradient SGD step.
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Stop after this many epochs without validation improvement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stopping_patience: Option<usize>,
    #[serde(default)]
    pub layout: ModelLayout,
}

impl TrainConfig {
    /// Same schedule for every task.
    pub fn uniform(num_tasks: usize, learning_rate: f64, epochs: usize, batch_size: usize) -> Self {
        TrainConfig {
            learning_rate,
            epochs,
            tasks: vec![
                TaskSchedule {
                    batch_size,
                    period: 1,
                    loss_weights: LossWeights::default(),
                };
                num_tasks
            ],
            seed: 0,
            momentum: 0.0,
            weight_decay: 0.0,
            early_stopping_patience: None,
            layout: ModelLayout::default(),
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::InvalidConfig("no task schedules".into()));
        }
        for (t, s) in self.tasks.iter().enumerate() {
            if s.batch_size == 0 {
                return Err(Error::InvalidConfig(format!(
                    "task {t}: batch_size must be positive"
                )));
            }
            if s.period == 0 {
                return Err(Error::InvalidConfig(format!(
                    "task {t}: period must be at least 1"
                )));
            }
            s.loss_weights.validate()?;
        }
        if !self.tasks.iter().any(|s| s.period == 1) {
            return Err(Error::InvalidConfig(
                "at least one task needs period 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}
