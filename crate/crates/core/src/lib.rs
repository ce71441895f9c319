//! Multi-task branched networks: estimate task affinity with representation
//! similarity analysis, search parameter-sharing layouts under a compute
//! budget, and train the chosen layout with shared-gradient averaging.
//!
//! The crate is split along the workflow:
//!
//! * [`rsa`] turns per-module feature dumps into task dissimilarity matrices.
//! * [`search`] enumerates sharing plans and scores them.
//! * [`model`] is a small branched network with exact manual gradients.
//! * [`train`] runs the joint training loop, balanced sampling and
//!   hyperparameter evolution.
//! * [`data`] generates synthetic task families and reads/writes every file
//!   format used by the command-line tool.
//! * [`pipeline`] glues the above together for the end-to-end workflow.

pub mod data;
pub mod error;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod rsa;
pub mod search;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{BranchedModel, GradientSet, LossWeights, ModelDims, ModuleParams, TaskBatch};
pub use rsa::{DdsMatrix, FeatureDump, RdmStack};
pub use search::{CostModel, Partition, PlanMode, ScoredPlan, Selection, SharingPlan};
pub use train::{TaskDataset, TrainConfig, TrainReport};
