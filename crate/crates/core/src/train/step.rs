use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{
    loss_and_gradients, BranchedModel, GradientSet, ModuleParams, ParamId, TaskBatch,
};

/// Whether a task with skip period `period` contributes on 1-based
/// iteration `iteration`.
#[inline]
pub fn contributes(iteration: usize, period: usize) -> bool {
    iteration.is_multiple_of(period)
}

/// Per-parameter-object mean of the gradients of the tasks that read it.
///
/// Only tasks present in `grads` count towards the divisor, so an object
/// shared by a group of which some members skipped this iteration moves
/// along the mean of the gradients that were actually computed. Objects no
/// contributing task reads yield `None`. Gradients are summed in ascending
/// task order, so the result does not depend on the order of `grads`.
pub fn average_gradients(
    model: &BranchedModel,
    grads: &[GradientSet],
) -> Vec<Option<ModuleParams>> {
    let mut ordered: Vec<&GradientSet> = grads.iter().collect();
    ordered.sort_by_key(|g| g.task_id);
    (0..model.params().len())
        .map(|i| {
            let owners = model.owners(ParamId(i));
            let contributing: Vec<&ModuleParams> = ordered
                .iter()
                .filter(|g| owners.contains(&g.task_id))
                .map(|g| &g.grads[i])
                .collect();
            let (first, rest) = contributing.split_first()?;
            let mut sum = (*first).clone();
            for g in rest {
                for (s, v) in sum.values_mut().zip(g.values()) {
                    *s += v;
                }
            }
            let k = contributing.len() as f64;
            sum.values_mut().for_each(|v| *v /= k);
            Some(sum)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Loss of each contributing task, ascending task order.
    pub losses: Vec<(usize, f64)>,
}

/// SGD over averaged shared gradients, with optional momentum and weight
/// decay carried across steps.
#[derive(Debug, Clone)]
pub struct SharedSgd {
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Option<Vec<ModuleParams>>,
}

impl SharedSgd {
    pub fn new(config: &TrainConfig) -> Self {
        SharedSgd {
            learning_rate: config.learning_rate,
            momentum: config.momentum,
            weight_decay: config.weight_decay,
            velocity: None,
        }
    }

    pub fn step(
        &mut self,
        model: &mut BranchedModel,
        batches: &BTreeMap<usize, TaskBatch>,
        config: &TrainConfig,
    ) -> Result<StepReport> {
        if batches.is_empty() {
            return Err(Error::NoBatches);
        }
        if config.num_tasks() != model.num_tasks() {
            return Err(Error::DimensionMismatch(format!(
                "config has {} task schedules, model {} tasks",
                config.num_tasks(),
                model.num_tasks()
            )));
        }
        for (&task, batch) in batches {
            if batch.task_id != task {
                return Err(Error::DimensionMismatch(format!(
                    "batch keyed by task {task} carries task id {}",
                    batch.task_id
                )));
            }
        }
        // read-only phase; each task writes its own gradient buffer
        let shared: &BranchedModel = model;
        let results: Vec<(f64, GradientSet)> = batches
            .par_iter()
            .map(|(&task, batch)| {
                loss_and_gradients(shared, batch, &config.tasks[task].loss_weights)
            })
            .collect::<Result<_>>()?;
        let losses = results.iter().map(|(l, g)| (g.task_id, *l)).collect();
        let grads: Vec<GradientSet> = results.into_iter().map(|(_, g)| g).collect();
        let averaged = average_gradients(model, &grads);
        self.apply(model, averaged);
        Ok(StepReport { losses })
    }

    fn apply(&mut self, model: &mut BranchedModel, averaged: Vec<Option<ModuleParams>>) {
        let lr = self.learning_rate;
        let plain = self.momentum == 0.0 && self.weight_decay == 0.0;
        if plain {
            for (param, grad) in model.params_mut().iter_mut().zip(&averaged) {
                if let Some(g) = grad {
                    for (p, d) in param.values_mut().zip(g.values()) {
                        *p -= lr * d;
                    }
                }
            }
            return;
        }
        let velocity = self.velocity.get_or_insert_with(|| {
            model
                .params()
                .iter()
                .map(ModuleParams::zeros_like)
                .collect()
        });
        for ((param, grad), vel) in model
            .params_mut()
            .iter_mut()
            .zip(&averaged)
            .zip(velocity.iter_mut())
        {
            let Some(g) = grad else { continue };
            for ((p, d), v) in param.values_mut().zip(g.values()).zip(vel.values_mut()) {
                let d = d + self.weight_decay * *p;
                *v = self.momentum * *v + d;
                *p -= lr * *v;
            }
        }
    }
}

/// One joint update: every present task contributes its gradients, then
/// every parameter object steps along the mean of its contributors'
/// gradients scaled by the learning rate.
pub fn train_step(
    model: &mut BranchedModel,
    batches: &BTreeMap<usize, TaskBatch>,
    config: &TrainConfig,
) -> Result<StepReport> {
    SharedSgd::new(config).step(model, batches, config)
}
