//! Parameter-sharing architecture search.
//!
//! A [`SharingPlan`] assigns, for every shareable module, the tasks to
//! sharing groups. Plans are enumerated exhaustively, scored by how
//! dissimilar the tasks forced to share a module are (`rsa_score`) and by
//! their relative inference cost (`computational_score`), and the best plan
//! under a cost budget is selected together with the Pareto frontier.

mod partition;
mod plan;
mod score;
mod select;

pub use partition::{bell_number, enumerate_partitions, Partition, MAX_TASKS};
pub(crate) use plan::PlanRepr;
pub use plan::{enumerate_plans, PlanIter, PlanMode, SharingPlan};
pub use score::{
    computational_score, module_score, rsa_score, score_from_measured, CostModel, ScoredPlan,
};
pub use select::{dominates, select_architecture, Selection};
