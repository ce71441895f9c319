//! A small branched network realizing a [`SharingPlan`](crate::SharingPlan).
//!
//! The topology is a shared backbone (a chain of affine + ReLU layers), then
//! one affine + ReLU layer per shareable module, instantiated once per sharing
//! group, then a classification head and a box head per task. All parameters
//! live in one arena; tasks of the same group hold the same [`ParamId`], so a
//! shared module is literally one object.

mod gradcheck;
mod network;
mod params;

pub use gradcheck::{
    compare_gradients, grad_check, grad_check_with, GradCheckOptions, RELATIVE_ERROR_FLOOR,
};
pub use network::{
    backward, forward, loss_and_gradients, module_features, task_loss, GradientSet, LossWeights,
    Prediction, TaskBatch,
};
pub use params::{
    build_model, BranchedModel, ModelDims, ModuleParams, ParamId, ParamRole, BOX_DIM,
};
