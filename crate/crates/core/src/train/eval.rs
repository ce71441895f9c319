use serde::{Deserialize, Serialize};

use super::dataset::TaskDataset;
use crate::error::{Error, Result};
use crate::model::{forward, task_loss, BranchedModel, LossWeights};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: usize,
    /// Fraction of examples whose highest logit is the target class; ties
    /// resolve to the lowest class index.
    pub accuracy: f64,
    /// Mean squared error over all box coordinates.
    pub box_mse: f64,
}

pub fn evaluate(model: &BranchedModel, dataset: &TaskDataset) -> Result<TaskMetrics> {
    if dataset.is_empty() {
        return Err(Error::DimensionMismatch(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut correct = 0usize;
    let mut sq_err = 0.0;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = dataset.batch(chunk);
        let pred = forward(model, &batch)?;
        for (r, &target) in batch.class_targets.iter().enumerate() {
            if argmax(pred.logits.row(r)) == target {
                correct += 1;
            }
        }
        sq_err += pred
            .boxes
            .as_slice()
            .iter()
            .zip(batch.box_targets.as_slice())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
    }
    let n = dataset.len() as f64;
    Ok(TaskMetrics {
        task_id: dataset.task_id(),
        accuracy: correct as f64 / n,
        box_mse: sq_err / (n * 4.0),
    })
}

/// Mean task loss over a whole dataset.
pub fn mean_loss(
    model: &BranchedModel,
    dataset: &TaskDataset,
    weights: &LossWeights,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::DimensionMismatch(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = dataset.batch(chunk);
        let pred = forward(model, &batch)?;
        total += task_loss(&pred, &batch, weights)? * chunk.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::{build_model, ModelDims};
    use crate::search::SharingPlan;
    use crate::train::Example;

    /// Linear model (no hidden layers) with hand-set heads.
    fn linear_model(class_w: [[f64; 2]; 2], box_bias: [f64; 4]) -> BranchedModel {
        let dims = ModelDims {
            input_dim: 2,
            backbone_dims: vec![],
            module_dims: vec![],
            class_counts: vec![2],
        };
        let mut m = build_model(&SharingPlan::new(1, vec![]).unwrap(), &dims, 0).unwrap();
        let c = m.param_mut(m.class_head_id(0));
        c.weight = Matrix::from_rows(&class_w).unwrap();
        c.bias = vec![0.0, 0.0];
        let b = m.param_mut(m.box_head_id(0));
        b.weight = Matrix::zeros(4, 2);
        b.bias = box_bias.to_vec();
        m
    }

    fn ex(x: [f64; 2], class: usize, bbox: [f64; 4]) -> Example {
        Example {
            input: x.to_vec(),
            class,
            bbox,
        }
    }

    #[test]
    fn perfect_predictions() {
        let model = linear_model([[1.0, 0.0], [0.0, 1.0]], [0.5; 4]);
        let ds = TaskDataset::new(
            0,
            2,
            2,
            vec![ex([1.0, 0.0], 0, [0.5; 4]), ex([0.0, 1.0], 1, [0.5; 4])],
        )
        .unwrap();
        let m = evaluate(&model, &ds).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.box_mse, 0.0);
    }

    #[test]
    fn constant_logits_pick_class_zero() {
        let model = linear_model([[0.0, 0.0], [0.0, 0.0]], [0.5; 4]);
        let examples = (0..20)
            .map(|i| ex([i as f64, 1.0], i % 2, [0.5; 4]))
            .collect();
        let ds = TaskDataset::new(0, 2, 2, examples).unwrap();
        assert_eq!(evaluate(&model, &ds).unwrap().accuracy, 0.5);
    }

    #[test]
    fn hand_built_three_examples() {
        // logits = (x0, x1); boxes constant 0.5
        let model = linear_model([[1.0, 0.0], [0.0, 1.0]], [0.5; 4]);
        let ds = TaskDataset::new(
            0,
            2,
            2,
            vec![
                ex([2.0, 1.0], 0, [0.5, 0.5, 0.5, 0.5]), // correct, err 0
                ex([0.0, 3.0], 0, [0.0, 0.5, 0.5, 1.0]), // wrong, err 0.25 + 0.25
                ex([1.0, 1.0], 1, [0.1, 0.5, 0.5, 0.5]), // tie -> class 0, wrong, err 0.16
            ],
        )
        .unwrap();
        let m = evaluate(&model, &ds).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.box_mse - 0.66 / 12.0).abs() < 1e-15);
    }
}
