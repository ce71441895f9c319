use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::BOX_DIM;
use crate::train::{Example, TaskDataset};

/// Pivots below this are treated as zero when factoring a relatedness
/// matrix, so that singular matrices such as all-ones are accepted.
const PIVOT_TOL: f64 = 1e-10;
/// Slack allowed when checking that a relatedness matrix is positive
/// semidefinite.
const PSD_TOL: f64 = 1e-9;
/// Scale of the box-map weights; keeps the sigmoid out of saturation.
const BOX_WEIGHT_SCALE: f64 = 0.5;

/// Description of a synthetic multi-task family.
///
/// Every task is a class-conditional Gaussian mixture. The class centres of
/// task `t` are `Σ_k L(t,k)·Z_k`, where the `Z_k` are independent standard
/// normal centre sets and `L` is the lower Cholesky factor of the
/// relatedness matrix `R`. The centres of tasks `i` and `j` therefore have
/// correlation `R(i,j)` coordinate by coordinate, and equal rows of `R`
/// give identical generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_tasks: usize,
    pub class_counts: Vec<usize>,
    pub input_dim: usize,
    pub examples_per_task: Vec<usize>,
    pub relatedness: Vec<Vec<f64>>,
    /// Standard deviation of the isotropic noise around each class centre.
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// Equal class and example counts for every task, with the same
    /// relatedness `r` between every pair of distinct tasks.
    pub fn uniform(
        num_tasks: usize,
        num_classes: usize,
        input_dim: usize,
        examples: usize,
        r: f64,
        seed: u64,
    ) -> Self {
        let relatedness = (0..num_tasks)
            .map(|i| {
                (0..num_tasks)
                    .map(|j| if i == j { 1.0 } else { r })
                    .collect()
            })
            .collect();
        SynthSpec {
            num_tasks,
            class_counts: vec![num_classes; num_tasks],
            input_dim,
            examples_per_task: vec![examples; num_tasks],
            relatedness,
            noise: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_tasks;
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if n == 0 {
            return bad("num_tasks must be at least 1".into());
        }
        if self.class_counts.len() != n || self.examples_per_task.len() != n {
            return bad(format!(
                "class_counts and examples_per_task need {n} entries"
            ));
        }
        if let Some(t) = self.class_counts.iter().position(|&c| c < 2) {
            return bad(format!("task {t} needs at least 2 classes"));
        }
        if let Some(t) = self.examples_per_task.iter().position(|&e| e == 0) {
            return bad(format!("task {t} needs at least one example"));
        }
        if self.input_dim < BOX_DIM {
            return bad(format!("input_dim must be at least {BOX_DIM}"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if self.relatedness.len() != n || self.relatedness.iter().any(|r| r.len() != n) {
            return bad(format!("relatedness must be {n}x{n}"));
        }
        for i in 0..n {
            if self.relatedness[i][i] != 1.0 {
                return bad(format!("relatedness diagonal at {i} must be 1"));
            }
            for j in 0..n {
                let r = self.relatedness[i][j];
                if !(0.0..=1.0).contains(&r) {
                    return bad(format!("relatedness[{i}][{j}] = {r} outside [0, 1]"));
                }
                if r != self.relatedness[j][i] {
                    return bad(format!("relatedness is not symmetric at ({i}, {j})"));
                }
            }
        }
        cholesky_psd(&self.relatedness).map(|_| ())
    }
}

/// Lower-triangular `L` with `L·Lᵀ = R` for positive semidefinite `R`.
fn cholesky_psd(r: &[Vec<f64>]) -> Result<Matrix> {
    let n = r.len();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = r[j][j];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PSD_TOL {
            return Err(Error::InvalidSpec(
                "relatedness matrix is not positive semidefinite".into(),
            ));
        }
        let pivot = if d > PIVOT_TOL { d.sqrt() } else { 0.0 };
        l.row_mut(j)[j] = pivot;
        for i in j + 1..n {
            let mut s = r[i][j];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if pivot == 0.0 {
                if s.abs() > PSD_TOL.sqrt() {
                    return Err(Error::InvalidSpec(
                        "relatedness matrix is not positive semidefinite".into(),
                    ));
                }
            } else {
                l.row_mut(i)[j] = s / pivot;
            }
        }
    }
    Ok(l)
}

/// Ground-truth sampler of one synthetic task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenerator {
    pub task_id: usize,
    /// One row per class.
    pub centers: Matrix,
    pub noise: f64,
    pub box_weight: Matrix,
    pub box_bias: [f64; BOX_DIM],
}

impl TaskGenerator {
    pub fn num_classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.centers.cols()
    }

    /// Box of an input: an affine map of its first four coordinates passed
    /// through the logistic function.
    pub fn box_of(&self, input: &[f64]) -> [f64; BOX_DIM] {
        let mut b = [0.0; BOX_DIM];
        for (k, out) in b.iter_mut().enumerate() {
            let z: f64 = self.box_bias[k]
                + (0..BOX_DIM)
                    .map(|c| self.box_weight[(k, c)] * input[c])
                    .sum::<f64>();
            *out = 1.0 / (1.0 + (-z).exp());
        }
        b
    }

    pub fn sample<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Example {
        let input: Vec<f64> = self
            .centers
            .row(class)
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                c + self.noise * z
            })
            .collect();
        Example {
            bbox: self.box_of(&input),
            input,
            class,
        }
    }

    /// `n` fresh examples with classes assigned round-robin.
    pub fn draw(&self, n: usize, seed: u64) -> Result<TaskDataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.task_id as u64 + 1);
        self.draw_with(n, &mut rng)
    }

    fn draw_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<TaskDataset> {
        let c = self.num_classes();
        let examples = (0..n).map(|i| self.sample(i % c, rng)).collect();
        TaskDataset::new(self.task_id, c, self.input_dim(), examples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTasks {
    pub datasets: Vec<TaskDataset>,
    pub generators: Vec<TaskGenerator>,
}

impl SyntheticTasks {
    /// A probe set mixing `per_task` fresh inputs from every generator,
    /// task by task.
    pub fn probe_inputs(&self, per_task: usize, seed: u64) -> Result<Matrix> {
        let mut rows = Vec::with_capacity(per_task * self.generators.len());
        for g in &self.generators {
            let ds = g.draw(per_task, seed)?;
            rows.extend(ds.examples().iter().map(|e| e.input.clone()));
        }
        Matrix::from_rows(&rows)
    }
}

pub fn generate_synthetic_tasks(spec: &SynthSpec) -> Result<SyntheticTasks> {
    spec.validate()?;
    let n = spec.num_tasks;
    let d = spec.input_dim;
    let max_classes = spec.class_counts.iter().copied().max().unwrap_or(0);
    let l = cholesky_psd(&spec.relatedness)?;

    // stream 0 holds everything shared by the family
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let latent: Vec<Matrix> = (0..n)
        .map(|_| Matrix::from_fn(max_classes, d, |_, _| normal(&mut rng)))
        .collect();
    let box_weight = Matrix::from_fn(BOX_DIM, BOX_DIM, |_, _| BOX_WEIGHT_SCALE * normal(&mut rng));
    let mut box_bias = [0.0; BOX_DIM];
    for b in &mut box_bias {
        *b = BOX_WEIGHT_SCALE * normal(&mut rng);
    }

    let generators: Vec<TaskGenerator> = (0..n)
        .map(|t| {
            let centers = Matrix::from_fn(spec.class_counts[t], d, |c, j| {
                (0..=t).fold(0.0, |acc, k| acc + l[(t, k)] * latent[k][(c, j)])
            });
            TaskGenerator {
                task_id: t,
                centers,
                noise: spec.noise,
                box_weight: box_weight.clone(),
                box_bias,
            }
        })
        .collect();

    let datasets = generators
        .iter()
        .map(|g| {
            let mut task_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            task_rng.set_stream(g.task_id as u64 + 1);
            g.draw_with(spec.examples_per_task[g.task_id], &mut task_rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticTasks {
        datasets,
        generators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let r = vec![
            vec![1.0, 0.9, 0.1],
            vec![0.9, 1.0, 0.1],
            vec![0.1, 0.1, 1.0],
        ];
        let l = cholesky_psd(&r).unwrap();
        let back = l.matmul(&l.transpose()).unwrap();
        assert!(back.max_abs_diff(&Matrix::from_rows(&r).unwrap()) < 1e-12);
    }

    #[test]
    fn singular_and_invalid_relatedness() {
        assert!(cholesky_psd(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).is_ok());
        // pairwise 0 and 1 contradict each other
        let r = vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
        ];
        assert!(cholesky_psd(&r).is_err());
    }

    #[test]
    fn all_ones_gives_identical_generators() {
        let tasks = generate_synthetic_tasks(&SynthSpec::uniform(3, 3, 6, 30, 1.0, 4)).unwrap();
        for g in &tasks.generators[1..] {
            assert!(g.centers.max_abs_diff(&tasks.generators[0].centers) < 1e-12);
        }
        // different samples all the same
        assert_ne!(tasks.datasets[0].examples(), tasks.datasets[1].examples());
    }

    #[test]
    fn deterministic_and_valid() {
        let spec = SynthSpec::uniform(2, 4, 5, 50, 0.3, 9);
        let a = generate_synthetic_tasks(&spec).unwrap();
        let b = generate_synthetic_tasks(&spec).unwrap();
        assert_eq!(a, b);
        let ds = &a.datasets[1];
        assert_eq!(ds.task_id(), 1);
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.class_frequencies(), vec![13, 13, 12, 12]);
        assert!(ds
            .examples()
            .iter()
            .all(|e| e.bbox.iter().all(|b| *b > 0.0 && *b < 1.0)));
    }

    #[test]
    fn single_task() {
        let tasks = generate_synthetic_tasks(&SynthSpec::uniform(1, 2, 4, 10, 0.0, 0)).unwrap();
        assert_eq!(tasks.datasets.len(), 1);
    }

    #[test]
    fn spec_validation() {
        let mut spec = SynthSpec::uniform(2, 2, 4, 10, 0.5, 0);
        spec.relatedness[0][1] = 0.4;
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        let mut spec = SynthSpec::uniform(2, 2, 3, 10, 0.5, 0);
        assert!(spec.validate().is_err());
        spec.input_dim = 4;
        spec.class_counts[1] = 1;
        assert!(spec.validate().is_err());
    }
}
