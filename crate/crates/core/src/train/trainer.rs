use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::dataset::TaskDataset;
use super::eval::{evaluate, mean_loss, TaskMetrics};
use super::sampler::balanced_batch;
use super::step::{contributes, SharedSgd};
use crate::error::{Error, Result};
use crate::model::BranchedModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss of each task over the epoch; `None` when the task
    /// did not contribute during the epoch.
    pub task_losses: Vec<Option<f64>>,
    /// Sum over tasks of the mean validation loss, when validation data is set.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Metrics of the returned model on the training data.
    pub final_metrics: Vec<TaskMetrics>,
    /// Number of updates each task contributed to.
    pub iterations_per_task: Vec<usize>,
    pub total_iterations: usize,
    pub stopped_early: bool,
}

/// Joint trainer with optional validation-based early stopping.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    validation: Option<Vec<TaskDataset>>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        Trainer {
            config,
            validation: None,
        }
    }

    pub fn with_validation(mut self, datasets: Vec<TaskDataset>) -> Self {
        self.validation = Some(datasets);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Number of joint iterations in one epoch: enough batches to cover the
    /// largest dataset among the tasks that contribute every iteration.
    pub fn iterations_per_epoch(&self, datasets: &[TaskDataset]) -> usize {
        self.config
            .tasks
            .iter()
            .zip(datasets)
            .filter(|(s, _)| s.period == 1)
            .map(|(s, d)| d.len().div_ceil(s.batch_size))
            .max()
            .unwrap_or(0)
    }

    pub fn run(
        &self,
        mut model: BranchedModel,
        datasets: &[TaskDataset],
    ) -> Result<(BranchedModel, TrainReport)> {
        let cfg = &self.config;
        cfg.validate()?;
        check_datasets(&model, datasets, "training")?;
        if cfg.num_tasks() != model.num_tasks() {
            return Err(Error::DimensionMismatch(format!(
                "config has {} task schedules, model {} tasks",
                cfg.num_tasks(),
                model.num_tasks()
            )));
        }
        for (t, (s, d)) in cfg.tasks.iter().zip(datasets).enumerate() {
            if s.batch_size > d.len() {
                return Err(Error::BatchTooLarge {
                    requested: s.batch_size,
                    available: d.len(),
                });
            }
            if d.is_empty() {
                return Err(Error::DimensionMismatch(format!(
                    "task {t} has no training examples"
                )));
            }
        }
        if let Some(val) = &self.validation {
            check_datasets(&model, val, "validation")?;
        }

        let num_tasks = model.num_tasks();
        let per_epoch = self.iterations_per_epoch(datasets);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut optimizer = SharedSgd::new(cfg);
        let mut iteration = 0usize;
        let mut iterations_per_task = vec![0usize; num_tasks];
        let mut epochs = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(f64, BranchedModel)> = None;
        let mut since_best = 0usize;
        let mut stopped_early = false;

        for epoch in 0..cfg.epochs {
            let mut loss_sums = vec![0.0; num_tasks];
            let mut loss_counts = vec![0usize; num_tasks];
            for _ in 0..per_epoch {
                iteration += 1;
                let mut batches = BTreeMap::new();
                for (t, s) in cfg.tasks.iter().enumerate() {
                    if contributes(iteration, s.period) {
                        batches.insert(t, balanced_batch(&datasets[t], s.batch_size, &mut rng)?);
                    }
                }
                let report = optimizer.step(&mut model, &batches, cfg)?;
                for (t, loss) in report.losses {
                    loss_sums[t] += loss;
                    loss_counts[t] += 1;
                    iterations_per_task[t] += 1;
                }
            }
            let task_losses: Vec<Option<f64>> = loss_sums
                .iter()
                .zip(&loss_counts)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect();
            let validation_loss = match &self.validation {
                Some(val) => Some(total_loss(&model, val, cfg)?),
                None => None,
            };
            epochs.push(EpochRecord {
                epoch,
                task_losses,
                validation_loss,
            });

            if let Some(patience) = cfg.early_stopping_patience {
                let monitored = match validation_loss {
                    Some(v) => v,
                    None => total_loss(&model, datasets, cfg)?,
                };
                let improved = best.as_ref().is_none_or(|(b, _)| monitored < *b);
                if improved {
                    best = Some((monitored, model.clone()));
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best > patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
        }
        if let Some((_, best_model)) = best {
            model = best_model;
        }

        let final_metrics = datasets
            .iter()
            .map(|d| evaluate(&model, d))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            model,
            TrainReport {
                epochs,
                final_metrics,
                iterations_per_task,
                total_iterations: iteration,
                stopped_early,
            },
        ))
    }
}

/// Trains `model` jointly on one dataset per task.
pub fn train(
    model: BranchedModel,
    datasets: &[TaskDataset],
    config: &TrainConfig,
) -> Result<(BranchedModel, TrainReport)> {
    Trainer::new(config.clone()).run(model, datasets)
}

fn total_loss(model: &BranchedModel, datasets: &[TaskDataset], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    for (d, s) in datasets.iter().zip(&cfg.tasks) {
        total += mean_loss(model, d, &s.loss_weights)?;
    }
    Ok(total)
}

fn check_datasets(model: &BranchedModel, datasets: &[TaskDataset], what: &str) -> Result<()> {
    if datasets.len() != model.num_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "{} {what} datasets for a {}-task model",
            datasets.len(),
            model.num_tasks()
        )));
    }
    let dims = model.dims();
    for (t, d) in datasets.iter().enumerate() {
        if d.task_id() != t {
            return Err(Error::DimensionMismatch(format!(
                "{what} dataset {t} is labelled task {}",
                d.task_id()
            )));
        }
        if d.input_dim() != dims.input_dim || d.num_classes() != dims.class_counts[t] {
            return Err(Error::DimensionMismatch(format!(
                "{what} dataset {t}: {} inputs / {} classes, model expects {} / {}",
                d.input_dim(),
                d.num_classes(),
                dims.input_dim,
                dims.class_counts[t]
            )));
        }
    }
    Ok(())
}
