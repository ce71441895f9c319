use std::fmt;

use crate::error::{Error, Result};

/// Largest task count accepted by the enumerators; Bell(10) = 115 975.
pub const MAX_TASKS: usize = 10;

/// A partition of the tasks `0..n` into non-empty disjoint groups.
///
/// Stored as a restricted growth string: `labels[i]` is the group of task
/// `i`, `labels[0] == 0` and every label is at most one more than the largest
/// label before it. This form is canonical, so structural equality is set
/// equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<u8>,
}

impl Partition {
    /// Every task in one group.
    pub fn shared(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    /// Every task in its own group.
    pub fn split(n: usize) -> Self {
        Partition {
            labels: (0..n as u8).collect(),
        }
    }

    /// Builds a partition from explicit zero-based groups, in any order.
    pub fn from_groups(n: usize, groups: &[Vec<usize>]) -> Result<Self> {
        if n > u8::MAX as usize {
            return Err(Error::TooManyTasks(n));
        }
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidPlan(format!("group {g} is empty")));
            }
            for &t in group {
                if t >= n {
                    return Err(Error::InvalidPlan(format!(
                        "task {t} out of range for {n} tasks"
                    )));
                }
                if owner[t].replace(g).is_some() {
                    return Err(Error::InvalidPlan(format!(
                        "task {t} appears in more than one group"
                    )));
                }
            }
        }
        let owner = owner
            .into_iter()
            .enumerate()
            .map(|(t, o)| {
                o.ok_or_else(|| {
                    Error::InvalidPlan(format!("task {t} is not assigned to any group"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::canonicalize(&owner))
    }

    /// Builds a partition from arbitrary group labels, one per task.
    pub fn from_labels(labels: &[usize]) -> Self {
        Self::canonicalize(labels)
    }

    fn canonicalize(labels: &[usize]) -> Self {
        let mut remap: Vec<(usize, u8)> = Vec::new();
        let labels = labels
            .iter()
            .map(|&l| match remap.iter().find(|(from, _)| *from == l) {
                Some(&(_, to)) => to,
                None => {
                    let to = remap.len() as u8;
                    remap.push((l, to));
                    to
                }
            })
            .collect();
        Partition { labels }
    }

    pub fn num_tasks(&self) -> usize {
        self.labels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// Group index of `task`; groups are numbered by their smallest member.
    pub fn group_of(&self, task: usize) -> usize {
        self.labels[task] as usize
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().map(|&l| l as usize)
    }

    /// Groups in canonical order, each sorted ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_groups()];
        for (t, &l) in self.labels.iter().enumerate() {
            groups[l as usize].push(t);
        }
        groups
    }

    pub fn same_group(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// True if every group of `self` lies inside some group of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.num_tasks() == coarser.num_tasks()
            && self.groups().iter().all(|g| {
                let l = coarser.labels[g[0]];
                g.iter().all(|&t| coarser.labels[t] == l)
            })
    }

    /// Partition obtained by fusing groups `a` and `b`.
    pub fn merge(&self, a: usize, b: usize) -> Partition {
        let labels: Vec<usize> = self.labels().map(|l| if l == b { a } else { l }).collect();
        Self::canonicalize(&labels)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, g) in self.groups().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, t) in g.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", t + 1)?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

/// Bell numbers via the Bell triangle.
pub fn bell_number(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// All partitions of `n` tasks in lexicographic restricted-growth-string
/// order (the fully shared partition first, fully split last).
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if n > MAX_TASKS {
        return Err(Error::TooManyTasks(n));
    }
    if n == 0 {
        return Err(Error::InvalidPlan("at least one task is required".into()));
    }
    let mut out = Vec::with_capacity(bell_number(n) as usize);
    let mut labels = vec![0u8; n];
    // prefix_max[i] = max(labels[..=i])
    let mut prefix_max = vec![0u8; n];
    loop {
        out.push(Partition {
            labels: labels.clone(),
        });
        // rightmost position that can still be incremented
        let Some(i) = (1..n).rev().find(|&i| labels[i] <= prefix_max[i - 1]) else {
            break;
        };
        labels[i] += 1;
        prefix_max[i] = prefix_max[i - 1].max(labels[i]);
        for j in i + 1..n {
            labels[j] = 0;
            prefix_max[j] = prefix_max[i];
        }
    }
    Ok(out)
}
