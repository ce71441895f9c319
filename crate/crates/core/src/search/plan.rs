use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::partition::{enumerate_partitions, Partition};
use crate::error::{Error, Result};

/// For every shareable module, how the tasks are split into sharing groups.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct SharingPlan {
    num_tasks: usize,
    partitions: Vec<Partition>,
}

impl SharingPlan {
    pub fn new(num_tasks: usize, partitions: Vec<Partition>) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::InvalidPlan("a plan needs at least one task".into()));
        }
        for (m, p) in partitions.iter().enumerate() {
            if p.num_tasks() != num_tasks {
                return Err(Error::InvalidPlan(format!(
                    "module {m} partitions {} tasks, plan has {num_tasks}",
                    p.num_tasks()
                )));
            }
        }
        Ok(SharingPlan {
            num_tasks,
            partitions,
        })
    }

    /// Every module shared by all tasks.
    pub fn fully_shared(num_tasks: usize, num_modules: usize) -> Self {
        SharingPlan {
            num_tasks,
            partitions: vec![Partition::shared(num_tasks); num_modules],
        }
    }

    /// Every module private to each task.
    pub fn fully_split(num_tasks: usize, num_modules: usize) -> Self {
        SharingPlan {
            num_tasks,
            partitions: vec![Partition::split(num_tasks); num_modules],
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_modules(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn partition(&self, module: usize) -> &Partition {
        &self.partitions[module]
    }

    /// True if every module's partition refines the previous module's.
    pub fn is_tree(&self) -> bool {
        self.partitions.windows(2).all(|w| w[1].refines(&w[0]))
    }

    /// Total number of shareable-module instances the plan instantiates.
    pub fn num_instances(&self) -> usize {
        self.partitions.iter().map(Partition::num_groups).sum()
    }
}

impl fmt::Display for SharingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, p) in self.partitions.iter().enumerate() {
            if m > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// File representation: 1-based task ids, one list of groups per module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct PlanRepr {
    pub num_tasks: usize,
    pub partitions: Vec<Vec<Vec<usize>>>,
}

impl From<SharingPlan> for PlanRepr {
    fn from(plan: SharingPlan) -> Self {
        PlanRepr {
            num_tasks: plan.num_tasks,
            partitions: plan
                .partitions
                .iter()
                .map(|p| {
                    p.groups()
                        .into_iter()
                        .map(|g| g.into_iter().map(|t| t + 1).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

impl TryFrom<PlanRepr> for SharingPlan {
    type Error = Error;

    fn try_from(repr: PlanRepr) -> Result<Self> {
        let n = repr.num_tasks;
        if n == 0 {
            return Err(Error::schema("num_tasks", "must be at least 1"));
        }
        let partitions = repr
            .partitions
            .iter()
            .enumerate()
            .map(|(m, groups)| {
                let zero_based = groups
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|&t| {
                                t.checked_sub(1).ok_or_else(|| {
                                    Error::schema(
                                        format!("partitions[{m}]"),
                                        "task ids are 1-based",
                                    )
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Partition::from_groups(n, &zero_based).map_err(|e| {
                    let msg = match e {
                        Error::InvalidPlan(msg) => msg,
                        other => other.to_string(),
                    };
                    Error::schema(format!("partitions[{m}]"), msg)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SharingPlan::new(n, partitions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    /// Independent partition per module.
    #[default]
    Unconstrained,
    /// Each module's groups must nest inside the previous module's groups.
    Tree,
}

impl FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" => Ok(PlanMode::Unconstrained),
            "tree" => Ok(PlanMode::Tree),
            other => Err(Error::InvalidConfig(format!("unknown plan mode `{other}`"))),
        }
    }
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Unconstrained => "unconstrained",
            PlanMode::Tree => "tree",
        })
    }
}

/// Lazily enumerates sharing plans in lexicographic order of the per-module
/// partition indices (module 0 most significant).
pub fn enumerate_plans(num_tasks: usize, num_modules: usize, mode: PlanMode) -> Result<PlanIter> {
    if num_modules == 0 {
        return Err(Error::InvalidPlan(
            "at least one shareable module is required".into(),
        ));
    }
    let partitions = enumerate_partitions(num_tasks)?;
    let all: Vec<usize> = (0..partitions.len()).collect();
    let choices = match mode {
        PlanMode::Unconstrained => vec![all.clone(); partitions.len()],
        PlanMode::Tree => partitions
            .iter()
            .map(|coarse| {
                all.iter()
                    .copied()
                    .filter(|&j| partitions[j].refines(coarse))
                    .collect()
            })
            .collect(),
    };
    let mut iter = PlanIter {
        num_tasks,
        partitions,
        roots: (0..all.len()).collect(),
        choices,
        position: vec![0; num_modules],
        selected: vec![0; num_modules],
        exhausted: false,
    };
    iter.reset_from(0);
    Ok(iter)
}

pub struct PlanIter {
    num_tasks: usize,
    partitions: Vec<Partition>,
    roots: Vec<usize>,
    /// `choices[i]`: partitions allowed after partition `i`.
    choices: Vec<Vec<usize>>,
    position: Vec<usize>,
    selected: Vec<usize>,
    exhausted: bool,
}

impl PlanIter {
    fn options(&self, module: usize) -> &[usize] {
        if module == 0 {
            &self.roots
        } else {
            &self.choices[self.selected[module - 1]]
        }
    }

    fn reset_from(&mut self, module: usize) {
        for m in module..self.position.len() {
            self.position[m] = 0;
            self.selected[m] = self.options(m)[0];
        }
    }

    fn advance(&mut self) {
        for m in (0..self.position.len()).rev() {
            if self.position[m] + 1 < self.options(m).len() {
                self.position[m] += 1;
                self.selected[m] = self.options(m)[self.position[m]];
                self.reset_from(m + 1);
                return;
            }
        }
        self.exhausted = true;
    }
}

impl Iterator for PlanIter {
    type Item = SharingPlan;

    fn next(&mut self) -> Option<SharingPlan> {
        if self.exhausted {
            return None;
        }
        let plan = SharingPlan {
            num_tasks: self.num_tasks,
            partitions: self
                .selected
                .iter()
                .map(|&i| self.partitions[i].clone())
                .collect(),
        };
        self.advance();
        Some(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::bell_number;
    use std::collections::HashSet;

    #[test]
    fn unconstrained_counts() {
        assert_eq!(
            enumerate_plans(3, 6, PlanMode::Unconstrained)
                .unwrap()
                .count(),
            15625
        );
        assert_eq!(5u64.pow(6), 15625);
        assert_eq!(
            enumerate_plans(2, 1, PlanMode::Unconstrained)
                .unwrap()
                .count(),
            2
        );
    }

    #[test]
    fn two_tasks_one_module() {
        let plans: Vec<_> = enumerate_plans(2, 1, PlanMode::Unconstrained)
            .unwrap()
            .collect();
        assert_eq!(plans[0], SharingPlan::fully_shared(2, 1));
        assert_eq!(plans[1], SharingPlan::fully_split(2, 1));
    }

    #[test]
    fn tree_mode_excludes_split_then_merge() {
        let plans: Vec<_> = enumerate_plans(2, 2, PlanMode::Tree).unwrap().collect();
        assert_eq!(plans.len(), 3);
        let shared = Partition::shared(2);
        let split = Partition::split(2);
        assert!(!plans
            .iter()
            .any(|p| p.partitions() == [split.clone(), shared.clone()]));
        assert!(plans.iter().all(SharingPlan::is_tree));
    }

    #[test]
    fn tree_is_subset_of_unconstrained() {
        for (n, l) in [(3, 2), (3, 3), (4, 2)] {
            let all: HashSet<_> = enumerate_plans(n, l, PlanMode::Unconstrained)
                .unwrap()
                .collect();
            let tree: Vec<_> = enumerate_plans(n, l, PlanMode::Tree).unwrap().collect();
            assert!(tree.len() as u64 <= bell_number(n).pow(l as u32));
            assert!(tree.iter().all(|p| all.contains(p) && p.is_tree()));
            let brute = all.iter().filter(|p| p.is_tree()).count();
            assert_eq!(tree.len(), brute);
        }
    }

    #[test]
    fn enumeration_is_deterministic_and_unique() {
        let a: Vec<_> = enumerate_plans(3, 2, PlanMode::Unconstrained)
            .unwrap()
            .collect();
        let b: Vec<_> = enumerate_plans(3, 2, PlanMode::Unconstrained)
            .unwrap()
            .collect();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 25);
    }

    #[test]
    fn file_repr_rejects_overlap_with_module_index() {
        let repr = PlanRepr {
            num_tasks: 3,
            partitions: vec![vec![vec![1, 2, 3]], vec![vec![1, 2], vec![2, 3]]],
        };
        match SharingPlan::try_from(repr).unwrap_err() {
            Error::SchemaMismatch { field, .. } => assert_eq!(field, "partitions[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
