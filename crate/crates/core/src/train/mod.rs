//! Joint multi-task training.
//!
//! Every iteration, each task whose period divides the iteration number
//! draws a class-balanced batch and computes its gradients. Task-specific
//! parameters take a plain SGD step; every parameter object read by several
//! tasks moves along the mean gradient of the tasks that contributed in
//! this iteration.

mod config;
mod dataset;
mod eval;
mod evolve;
mod sampler;
mod step;
mod trainer;

pub use config::{ModelLayout, TaskSchedule, TrainConfig};
pub use dataset::{Example, TaskDataset};
pub use eval::{evaluate, mean_loss, TaskMetrics};
pub use evolve::{
    evolve_hyperparams, EvolutionResult, GenerationSummary, Hyperparams, ParamRange, SearchSpace,
};
pub use sampler::{balanced_batch, largest_remainder_quotas};
pub use step::{average_gradients, contributes, train_step, SharedSgd, StepReport};
pub use trainer::{train, EpochRecord, TrainReport, Trainer};
