//! End-to-end workflow: task affinity from independently trained networks,
//! plan selection, and joint training of the selected plan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic_tasks, SynthSpec, SyntheticTasks};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{build_model, module_features, BranchedModel};
use crate::rsa::{compute_rdm_stack_with, CkaOptions, FeatureDump, RdmStack};
use crate::search::{
    enumerate_plans, select_architecture, CostModel, PlanMode, Selection, SharingPlan,
};
use crate::train::{train, ModelLayout, TaskDataset, TrainConfig, TrainReport};

/// How the per-task reference networks are trained and probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinityConfig {
    #[serde(default)]
    pub layout: ModelLayout,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds both the initialization, shared by all reference networks, and
    /// batch sampling.
    #[serde(default)]
    pub seed: u64,
    /// Probe inputs contributed by every task.
    pub probes_per_task: usize,
    #[serde(default = "yes")]
    pub center: bool,
}

fn yes() -> bool {
    true
}

impl Default for AffinityConfig {
    fn default() -> Self {
        AffinityConfig {
            layout: ModelLayout::default(),
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            probes_per_task: 20,
            center: true,
        }
    }
}

/// The first `per_task` inputs of every dataset, task by task.
pub fn probe_from_datasets(datasets: &[TaskDataset], per_task: usize) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(per_task * datasets.len());
    for d in datasets {
        if d.len() < per_task {
            return Err(Error::DimensionMismatch(format!(
                "task {} has {} examples, {per_task} probes requested",
                d.task_id(),
                d.len()
            )));
        }
        rows.extend(d.examples()[..per_task].iter().map(|e| e.input.clone()));
    }
    Matrix::from_rows(&rows)
}

/// Trains one single-task network per dataset from a common initialization.
pub fn train_reference_models(
    datasets: &[TaskDataset],
    config: &AffinityConfig,
) -> Result<Vec<BranchedModel>> {
    let num_modules = config.layout.module_dims.len();
    datasets
        .par_iter()
        .map(|d| {
            let dims = config.layout.dims(d.input_dim(), vec![d.num_classes()]);
            let plan = SharingPlan::fully_shared(1, num_modules);
            let model = build_model(&plan, &dims, config.seed)?;
            let mut cfg = TrainConfig::uniform(
                1,
                config.learning_rate,
                config.epochs,
                config.batch_size.min(d.len()),
            );
            cfg.seed = config.seed;
            cfg.layout = config.layout.clone();
            let single = d.clone().with_task_id(0);
            Ok(train(model, std::slice::from_ref(&single), &cfg)?.0)
        })
        .collect()
}

/// Module activations of each reference network on the probe inputs.
pub fn feature_dumps(models: &[BranchedModel], probe: &Matrix) -> Result<Vec<FeatureDump>> {
    let mut dumps = Vec::new();
    for (t, model) in models.iter().enumerate() {
        for (m, features) in module_features(model, 0, probe)?.into_iter().enumerate() {
            dumps.push(FeatureDump::new(t, m, features)?);
        }
    }
    Ok(dumps)
}

/// Task dissimilarity matrices of a family of datasets.
pub fn task_affinity(datasets: &[TaskDataset], config: &AffinityConfig) -> Result<RdmStack> {
    let models = train_reference_models(datasets, config)?;
    let probe = probe_from_datasets(datasets, config.probes_per_task)?;
    let dumps = feature_dumps(&models, &probe)?;
    compute_rdm_stack_with(
        &dumps,
        CkaOptions {
            center: config.center,
        },
    )
}

/// Everything needed to go from a synthetic family to a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub synth: SynthSpec,
    #[serde(default)]
    pub affinity: AffinityConfig,
    pub costs: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default)]
    pub mode: PlanMode,
    pub train: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub tasks: SyntheticTasks,
    pub rdms: RdmStack,
    pub selection: Selection,
    pub model: BranchedModel,
    pub report: TrainReport,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult> {
    let tasks = generate_synthetic_tasks(&config.synth)?;
    let mut affinity = config.affinity.clone();
    affinity.layout = config.train.layout.clone();
    let rdms = task_affinity(&tasks.datasets, &affinity)?;
    let plans = enumerate_plans(config.synth.num_tasks, rdms.num_modules(), config.mode)?;
    let selection = select_architecture(plans, &rdms, &config.costs, config.budget)?;
    let dims = config
        .train
        .layout
        .dims(config.synth.input_dim, config.synth.class_counts.clone());
    let model = build_model(&selection.best.plan, &dims, config.train.seed)?;
    let (model, report) = train(model, &tasks.datasets, &config.train)?;
    Ok(PipelineResult {
        tasks,
        rdms,
        selection,
        model,
        report,
    })
}
