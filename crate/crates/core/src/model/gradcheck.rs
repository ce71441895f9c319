use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{forward, loss_and_gradients, task_loss, GradientSet, LossWeights, TaskBatch};
use super::params::BranchedModel;
use crate::error::{Error, Result};

/// Denominator floor of the relative error, so that near-zero gradients are
/// compared absolutely instead of amplifying finite-difference round-off.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Above this many coordinates a seeded random subset of this size is
    /// checked instead of all of them.
    pub max_coordinates: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coordinates: 10_000,
            seed: 0,
        }
    }
}

/// Worst relative error between [`backward`](super::backward) and central
/// differences.
pub fn grad_check(
    model: &BranchedModel,
    batch: &TaskBatch,
    weights: &LossWeights,
    epsilon: f64,
) -> Result<f64> {
    grad_check_with(
        model,
        batch,
        weights,
        GradCheckOptions {
            epsilon,
            ..GradCheckOptions::default()
        },
    )
}

pub fn grad_check_with(
    model: &BranchedModel,
    batch: &TaskBatch,
    weights: &LossWeights,
    options: GradCheckOptions,
) -> Result<f64> {
    let (_, grads) = loss_and_gradients(model, batch, weights)?;
    compare_gradients(model, batch, weights, &grads, options)
}

/// Worst relative error between `grads` and central differences of the
/// task loss, `|g − fd| / max(|g|, |fd|, RELATIVE_ERROR_FLOOR)`.
pub fn compare_gradients(
    model: &BranchedModel,
    batch: &TaskBatch,
    weights: &LossWeights,
    grads: &GradientSet,
    options: GradCheckOptions,
) -> Result<f64> {
    let eps = options.epsilon;
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {eps} outside (0, 1e-2]"
        )));
    }
    if grads.grads.len() != model.params().len()
        || grads
            .grads
            .iter()
            .zip(model.params())
            .any(|(g, p)| !g.same_shape(p))
    {
        return Err(Error::DimensionMismatch(
            "gradient set does not match the model".into(),
        ));
    }

    let coords: Vec<(usize, usize)> = model
        .params()
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.num_values()).map(move |k| (i, k)))
        .collect();
    let selected: Vec<(usize, usize)> = if coords.len() > options.max_coordinates {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut picks =
            rand::seq::index::sample(&mut rng, coords.len(), options.max_coordinates).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| coords[i]).collect()
    } else {
        coords
    };

    let mut probe = model.clone();
    let loss_at = |probe: &BranchedModel| -> Result<f64> {
        let pred = forward(probe, batch)?;
        task_loss(&pred, batch, weights)
    };
    let mut worst: f64 = 0.0;
    for (i, k) in selected {
        let original = model.params()[i].value(k);
        *probe.params_mut()[i].value_mut(k) = original + eps;
        let up = loss_at(&probe)?;
        *probe.params_mut()[i].value_mut(k) = original - eps;
        let down = loss_at(&probe)?;
        *probe.params_mut()[i].value_mut(k) = original;

        let numeric = (up - down) / (2.0 * eps);
        let analytic = grads.grads[i].value(k);
        let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::{build_model, ModelDims};
    use crate::search::SharingPlan;
    use rand::Rng;

    fn random_batch(
        rng: &mut ChaCha8Rng,
        task: usize,
        b: usize,
        d: usize,
        classes: usize,
    ) -> TaskBatch {
        TaskBatch {
            task_id: task,
            inputs: Matrix::from_fn(b, d, |_, _| rng.random_range(-1.0..1.0)),
            class_targets: (0..b).map(|_| rng.random_range(0..classes)).collect(),
            box_targets: Matrix::from_fn(b, 4, |_, _| rng.random_range(0.0..1.0)),
        }
    }

    #[test]
    fn linear_model_is_exact() {
        let dims = ModelDims {
            input_dim: 3,
            backbone_dims: vec![],
            module_dims: vec![],
            class_counts: vec![2],
        };
        let plan = SharingPlan::new(1, vec![]).unwrap();
        let model = build_model(&plan, &dims, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&mut rng, 0, 5, 3, 2);
        let err = grad_check(&model, &batch, &LossWeights::new(0.0, 1.0).unwrap(), 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn default_toy_model() {
        let dims = ModelDims {
            input_dim: 4,
            backbone_dims: vec![5],
            module_dims: vec![4, 3],
            class_counts: vec![3, 2],
        };
        let model = build_model(&SharingPlan::fully_split(2, 2), &dims, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(&mut rng, 1, 6, 4, 2);
        let err = grad_check(&model, &batch, &LossWeights::default(), 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let dims = ModelDims {
            input_dim: 3,
            backbone_dims: vec![4],
            module_dims: vec![3],
            class_counts: vec![2],
        };
        let model = build_model(&SharingPlan::fully_split(1, 1), &dims, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = random_batch(&mut rng, 0, 4, 3, 2);
        let w = LossWeights::default();
        let (_, mut grads) = loss_and_gradients(&model, &batch, &w).unwrap();
        *grads.grads[0].value_mut(1) += 0.1;
        let err =
            compare_gradients(&model, &batch, &w, &grads, GradCheckOptions::default()).unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn epsilon_is_validated() {
        let dims = ModelDims {
            input_dim: 2,
            backbone_dims: vec![],
            module_dims: vec![2],
            class_counts: vec![2],
        };
        let model = build_model(&SharingPlan::fully_split(1, 1), &dims, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = random_batch(&mut rng, 0, 2, 2, 2);
        assert!(grad_check(&model, &batch, &LossWeights::default(), 0.0).is_err());
        assert!(grad_check(&model, &batch, &LossWeights::default(), 0.1).is_err());
    }

    #[test]
    fn large_models_are_subsampled() {
        let dims = ModelDims {
            input_dim: 8,
            backbone_dims: vec![16],
            module_dims: vec![16],
            class_counts: vec![3],
        };
        let model = build_model(&SharingPlan::fully_split(1, 1), &dims, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = random_batch(&mut rng, 0, 3, 8, 3);
        let opts = GradCheckOptions {
            max_coordinates: 50,
            ..GradCheckOptions::default()
        };
        let err = grad_check_with(&model, &batch, &LossWeights::default(), opts).unwrap();
        assert!(err < 1e-4);
    }
}
