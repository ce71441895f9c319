//! Shared fixtures for the criterion benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use branchforge_core::rsa::compute_rdm_stack;
use branchforge_core::{FeatureDump, Matrix, ModelDims, RdmStack, TaskBatch};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// One dump per (task, module) with `probes` rows of width `dim`.
pub fn random_dumps(
    num_tasks: usize,
    num_modules: usize,
    probes: usize,
    dim: usize,
    seed: u64,
) -> Vec<FeatureDump> {
    let mut rng = rng(seed);
    let mut dumps = Vec::new();
    for t in 0..num_tasks {
        for m in 0..num_modules {
            dumps.push(FeatureDump::new(t, m, random_matrix(&mut rng, probes, dim)).unwrap());
        }
    }
    dumps
}

pub fn random_rdms(num_tasks: usize, num_modules: usize, seed: u64) -> RdmStack {
    compute_rdm_stack(&random_dumps(num_tasks, num_modules, 24, 8, seed)).unwrap()
}

pub fn dims(num_tasks: usize, width: usize, num_modules: usize) -> ModelDims {
    ModelDims {
        input_dim: width,
        backbone_dims: vec![width],
        module_dims: vec![width; num_modules],
        class_counts: vec![5; num_tasks],
    }
}

pub fn random_batches(dims: &ModelDims, batch: usize, seed: u64) -> BTreeMap<usize, TaskBatch> {
    let mut rng = rng(seed);
    (0..dims.class_counts.len())
        .map(|t| {
            let b = TaskBatch {
                task_id: t,
                inputs: random_matrix(&mut rng, batch, dims.input_dim),
                class_targets: (0..batch)
                    .map(|_| rng.random_range(0..dims.class_counts[t]))
                    .collect(),
                box_targets: Matrix::from_fn(batch, 4, |_, _| rng.random_range(0.0..1.0)),
            };
            (t, b)
        })
        .collect()
}
