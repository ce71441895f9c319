use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cka::{linear_cka_with, CkaOptions};
use super::dds::{compute_dds, DdsMatrix, FeatureDump};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One `N×N` task dissimilarity matrix per shareable module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdmStack {
    num_tasks: usize,
    matrices: Vec<Matrix>,
}

impl RdmStack {
    pub fn new(num_tasks: usize, matrices: Vec<Matrix>) -> Result<Self> {
        let stack = RdmStack {
            num_tasks,
            matrices,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn num_modules(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn module(&self, m: usize) -> &Matrix {
        &self.matrices[m]
    }

    /// Elementwise mean of several stacks of identical shape.
    pub fn mean(stacks: &[RdmStack]) -> Result<RdmStack> {
        let first = stacks
            .first()
            .ok_or_else(|| Error::DimensionMismatch("mean of zero RDM stacks".into()))?;
        let mut acc: Vec<Matrix> = first.matrices.clone();
        for s in &stacks[1..] {
            if s.num_tasks != first.num_tasks || s.num_modules() != first.num_modules() {
                return Err(Error::DimensionMismatch(
                    "RDM stacks differ in shape".into(),
                ));
            }
            for (a, m) in acc.iter_mut().zip(&s.matrices) {
                for (x, y) in a.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *x += y;
                }
            }
        }
        let k = stacks.len() as f64;
        RdmStack::new(
            first.num_tasks,
            acc.into_iter().map(|m| m.scale(1.0 / k)).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_tasks;
        if n == 0 {
            return Err(Error::DimensionMismatch("RDM stack without tasks".into()));
        }
        for (m, rdm) in self.matrices.iter().enumerate() {
            if rdm.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "RDM of module {m} is {}x{}, expected {n}x{n}",
                    rdm.rows(),
                    rdm.cols()
                )));
            }
            for i in 0..n {
                if rdm[(i, i)] != 0.0 {
                    return Err(Error::DegenerateInput(format!(
                        "RDM of module {m} has nonzero diagonal at {i}"
                    )));
                }
                for j in 0..n {
                    let v = rdm[(i, j)];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::DegenerateInput(format!(
                            "RDM of module {m} entry ({i},{j}) = {v} outside [0, 1]"
                        )));
                    }
                    if v != rdm[(j, i)] {
                        return Err(Error::DegenerateInput(format!(
                            "RDM of module {m} is not symmetric at ({i},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn compute_rdm_stack(dumps: &[FeatureDump]) -> Result<RdmStack> {
    compute_rdm_stack_with(dumps, CkaOptions::default())
}

/// Reduces one dump per (task, module) pair to an [`RdmStack`].
///
/// Task and module ids are zero-based and must form a dense grid. DDS
/// matrices are computed in parallel; the result does not depend on the
/// evaluation order.
pub fn compute_rdm_stack_with(dumps: &[FeatureDump], options: CkaOptions) -> Result<RdmStack> {
    if dumps.is_empty() {
        return Err(Error::MissingDump { task: 0, module: 0 });
    }
    let num_tasks = dumps.iter().map(|d| d.task_id).max().unwrap_or(0) + 1;
    let num_modules = dumps.iter().map(|d| d.module_id).max().unwrap_or(0) + 1;
    let probes = dumps[0].num_probes();

    let mut grid: Vec<Option<&FeatureDump>> = vec![None; num_tasks * num_modules];
    for d in dumps {
        if d.num_probes() != probes {
            return Err(Error::InconsistentProbeCount {
                expected: probes,
                found: d.num_probes(),
            });
        }
        let slot = &mut grid[d.module_id * num_tasks + d.task_id];
        if slot.is_some() {
            return Err(Error::DuplicateDump {
                task: d.task_id,
                module: d.module_id,
            });
        }
        *slot = Some(d);
    }
    let ordered = grid
        .iter()
        .enumerate()
        .map(|(k, d)| {
            d.ok_or(Error::MissingDump {
                task: k % num_tasks,
                module: k / num_tasks,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dds: Vec<DdsMatrix> = ordered
        .par_iter()
        .map(|d| compute_dds(d))
        .collect::<Result<_>>()?;

    let matrices = (0..num_modules)
        .map(|m| {
            let per_task = &dds[m * num_tasks..(m + 1) * num_tasks];
            let mut rdm = Matrix::zeros(num_tasks, num_tasks);
            for i in 0..num_tasks {
                for j in i + 1..num_tasks {
                    let cka = linear_cka_with(&per_task[i].values, &per_task[j].values, options)?;
                    let d = (1.0 - cka).clamp(0.0, 1.0);
                    rdm[(i, j)] = d;
                    rdm[(j, i)] = d;
                }
            }
            Ok(rdm)
        })
        .collect::<Result<Vec<_>>>()?;
    RdmStack::new(num_tasks, matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::linear_cka;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, p: usize, d: usize) -> Matrix {
        Matrix::from_fn(p, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_dumps_give_zero_rdms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_features(&mut rng, 6, 4);
        let dumps: Vec<_> = (0..3)
            .flat_map(|t| (0..2).map(move |m| (t, m)))
            .map(|(t, m)| FeatureDump::new(t, m, f.clone()).unwrap())
            .collect();
        let stack = compute_rdm_stack(&dumps).unwrap();
        assert_eq!(stack.num_tasks(), 3);
        assert_eq!(stack.num_modules(), 2);
        for rdm in stack.matrices() {
            assert!(rdm.as_slice().iter().all(|&v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn scaled_features_give_zero_dissimilarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(&mut rng, 5, 3);
        let dumps = vec![
            FeatureDump::new(0, 0, f.clone()).unwrap(),
            FeatureDump::new(1, 0, f.scale(5.0)).unwrap(),
        ];
        let stack = compute_rdm_stack(&dumps).unwrap();
        assert!(stack.module(0)[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn composition_matches_hand_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut dumps = Vec::new();
        for t in 0..3 {
            for m in 0..2 {
                dumps.push(FeatureDump::new(t, m, random_features(&mut rng, 7, 5)).unwrap());
            }
        }
        let stack = compute_rdm_stack(&dumps).unwrap();
        for m in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let di = compute_dds(&dumps[i * 2 + m]).unwrap();
                    let dj = compute_dds(&dumps[j * 2 + m]).unwrap();
                    let expected = if i == j {
                        0.0
                    } else {
                        1.0 - linear_cka(&di.values, &dj.values).unwrap()
                    };
                    assert!((stack.module(m)[(i, j)] - expected).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn missing_and_inconsistent_dumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dumps = vec![
            FeatureDump::new(0, 0, random_features(&mut rng, 4, 3)).unwrap(),
            FeatureDump::new(1, 1, random_features(&mut rng, 4, 3)).unwrap(),
        ];
        assert!(matches!(
            compute_rdm_stack(&dumps),
            Err(Error::MissingDump { task: 1, module: 0 })
        ));
        let dumps = vec![
            FeatureDump::new(0, 0, random_features(&mut rng, 4, 3)).unwrap(),
            FeatureDump::new(1, 0, random_features(&mut rng, 5, 3)).unwrap(),
        ];
        assert!(matches!(
            compute_rdm_stack(&dumps),
            Err(Error::InconsistentProbeCount {
                expected: 4,
                found: 5
            })
        ));
    }
}
