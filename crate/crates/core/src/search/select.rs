use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::plan::SharingPlan;
use super::score::{computational_score, rsa_score, CostModel, ScoredPlan};
use crate::error::{Error, Result};
use crate::rsa::RdmStack;

/// Outcome of an architecture search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Lowest `rsa_score` among plans within budget; ties go to the lower
    /// `computational_score`, then to the earlier plan in the stream.
    pub best: ScoredPlan,
    /// Plans not dominated on (rsa_score, computational_score), sorted by
    /// computational score, then rsa score, then stream order.
    pub pareto: Vec<ScoredPlan>,
    pub evaluated: usize,
}

/// `a` dominates `b` when it is no worse on both scores and strictly better
/// on at least one. Equal points do not dominate each other.
pub fn dominates(a: &ScoredPlan, b: &ScoredPlan) -> bool {
    a.rsa_score <= b.rsa_score
        && a.computational_score <= b.computational_score
        && (a.rsa_score < b.rsa_score || a.computational_score < b.computational_score)
}

/// Scores every plan of the stream and picks the best one under `budget`.
///
/// Both the argmin and the Pareto set are order-independent reductions
/// apart from the documented stream-order tie-break.
pub fn select_architecture<I>(
    plans: I,
    rdms: &RdmStack,
    costs: &CostModel,
    budget: Option<f64>,
) -> Result<Selection>
where
    I: IntoIterator<Item = SharingPlan>,
{
    costs.validate()?;
    if let Some(b) = budget {
        if !b.is_finite() {
            return Err(Error::InvalidConfig(format!("budget {b} is not finite")));
        }
    }
    let n = rdms.num_tasks();
    let mut best: Option<(usize, ScoredPlan)> = None;
    let mut front: Vec<(usize, ScoredPlan)> = Vec::new();
    let mut evaluated = 0;

    for (index, plan) in plans.into_iter().enumerate() {
        let scored = ScoredPlan {
            rsa_score: rsa_score(&plan, rdms)?,
            computational_score: computational_score(&plan, costs, n)?,
            plan,
        };
        evaluated += 1;

        let feasible = budget.is_none_or(|b| scored.computational_score <= b);
        if feasible {
            let better = match &best {
                None => true,
                Some((_, current)) => rank(&scored, current) == Ordering::Less,
            };
            if better {
                best = Some((index, scored.clone()));
            }
        }

        if !front.iter().any(|(_, p)| dominates(p, &scored)) {
            front.retain(|(_, p)| !dominates(&scored, p));
            front.push((index, scored));
        }
    }

    if evaluated == 0 {
        return Err(Error::InvalidPlan(
            "no candidate plans to select from".into(),
        ));
    }
    let (_, best) = best.ok_or(Error::InfeasibleBudget {
        budget: budget.unwrap_or(f64::NAN),
    })?;
    front.sort_by(|(ia, a), (ib, b)| {
        let cmp = |x: f64, y: f64| x.partial_cmp(&y).unwrap_or(Ordering::Equal);
        cmp(a.computational_score, b.computational_score)
            .then(cmp(a.rsa_score, b.rsa_score))
            .then(ia.cmp(ib))
    });
    Ok(Selection {
        best,
        pareto: front.into_iter().map(|(_, p)| p).collect(),
        evaluated,
    })
}

// scores are finite, so partial_cmp is total here; it also keeps 0.0 == -0.0
fn rank(a: &ScoredPlan, b: &ScoredPlan) -> Ordering {
    let cmp = |x: f64, y: f64| x.partial_cmp(&y).unwrap_or(Ordering::Equal);
    cmp(a.rsa_score, b.rsa_score).then(cmp(a.computational_score, b.computational_score))
}
