use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{TaskBatch, BOX_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub input: Vec<f64>,
    pub class: usize,
    pub bbox: [f64; BOX_DIM],
}

/// Labelled examples of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    task_id: usize,
    num_classes: usize,
    input_dim: usize,
    examples: Vec<Example>,
}

impl TaskDataset {
    pub fn new(
        task_id: usize,
        num_classes: usize,
        input_dim: usize,
        examples: Vec<Example>,
    ) -> Result<Self> {
        if num_classes == 0 || input_dim == 0 {
            return Err(Error::DimensionMismatch(
                "dataset needs classes and input features".into(),
            ));
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.input.len() != input_dim {
                return Err(Error::DimensionMismatch(format!(
                    "example {i} has {} features, expected {input_dim}",
                    ex.input.len()
                )));
            }
            if ex.class >= num_classes {
                return Err(Error::DimensionMismatch(format!(
                    "example {i} has class {} but the task has {num_classes} classes",
                    ex.class
                )));
            }
            if !ex.input.iter().all(|v| v.is_finite()) {
                return Err(Error::DegenerateInput(format!(
                    "example {i} has non-finite input"
                )));
            }
            if !ex.bbox.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::DegenerateInput(format!(
                    "example {i} has a box outside [0, 1]"
                )));
            }
        }
        Ok(TaskDataset {
            task_id,
            num_classes,
            input_dim,
            examples,
        })
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Example count of each class.
    pub fn class_frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0; self.num_classes];
        for ex in &self.examples {
            freq[ex.class] += 1;
        }
        freq
    }

    /// Same examples relabelled as another task.
    pub fn with_task_id(mut self, task_id: usize) -> Self {
        self.task_id = task_id;
        self
    }

    /// Concatenates datasets with equal class count and input width.
    pub fn concat(task_id: usize, parts: &[&TaskDataset]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("nothing to concatenate".into()))?;
        let mut examples = Vec::new();
        for p in parts {
            if p.num_classes != first.num_classes || p.input_dim != first.input_dim {
                return Err(Error::DimensionMismatch("datasets differ in shape".into()));
            }
            examples.extend(p.examples.iter().cloned());
        }
        TaskDataset::new(task_id, first.num_classes, first.input_dim, examples)
    }

    pub fn batch(&self, indices: &[usize]) -> TaskBatch {
        let b = indices.len();
        let inputs = Matrix::from_fn(b, self.input_dim, |r, c| self.examples[indices[r]].input[c]);
        let box_targets = Matrix::from_fn(b, BOX_DIM, |r, c| self.examples[indices[r]].bbox[c]);
        TaskBatch {
            task_id: self.task_id,
            inputs,
            class_targets: indices.iter().map(|&i| self.examples[i].class).collect(),
            box_targets,
        }
    }

    pub fn inputs(&self) -> Matrix {
        Matrix::from_fn(self.len(), self.input_dim, |r, c| self.examples[r].input[c])
    }
}
