use serde::{Deserialize, Serialize};

use super::params::{BranchedModel, ModuleParams, ParamId, BOX_DIM};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A mini-batch for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub task_id: usize,
    /// `B × input_dim`.
    pub inputs: Matrix,
    pub class_targets: Vec<usize>,
    /// `B × 4`, entries in `[0, 1]`.
    pub box_targets: Matrix,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn validate(&self, model: &BranchedModel) -> Result<()> {
        let b = self.inputs.rows();
        if self.task_id >= model.num_tasks() {
            return Err(Error::DimensionMismatch(format!(
                "task {} out of range for {} tasks",
                self.task_id,
                model.num_tasks()
            )));
        }
        if b == 0 {
            return Err(Error::DimensionMismatch("empty batch".into()));
        }
        if self.inputs.cols() != model.dims().input_dim {
            return Err(Error::DimensionMismatch(format!(
                "batch inputs have {} columns, model expects {}",
                self.inputs.cols(),
                model.dims().input_dim
            )));
        }
        if self.class_targets.len() != b || self.box_targets.shape() != (b, BOX_DIM) {
            return Err(Error::DimensionMismatch(
                "targets do not match batch size".into(),
            ));
        }
        let classes = model.dims().class_counts[self.task_id];
        if let Some(&c) = self.class_targets.iter().find(|&&c| c >= classes) {
            return Err(Error::DimensionMismatch(format!(
                "class target {c} out of range for {classes} classes"
            )));
        }
        if !self.inputs.is_finite() || !self.box_targets.is_finite() {
            return Err(Error::DegenerateInput("non-finite batch values".into()));
        }
        Ok(())
    }
}

/// Relative weight of the classification and box terms of a task's loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_cls: f64,
    pub w_box: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_cls: 1.0,
            w_box: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(w_cls: f64, w_box: f64) -> Result<Self> {
        let w = LossWeights { w_cls, w_box };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !ok(self.w_cls) || !ok(self.w_box) {
            return Err(Error::InvalidConfig(format!(
                "loss weights must be finite and non-negative, got ({}, {})",
                self.w_cls, self.w_box
            )));
        }
        if self.w_cls == 0.0 && self.w_box == 0.0 {
            return Err(Error::InvalidConfig("loss weights are both zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `B × C_t`.
    pub logits: Matrix,
    /// `B × 4`.
    pub boxes: Matrix,
}

/// Intermediate values of one forward pass.
struct Trace {
    path: Vec<ParamId>,
    /// Input of every hidden layer on the path.
    inputs: Vec<Matrix>,
    /// Pre-activation of every hidden layer on the path.
    pre: Vec<Matrix>,
    /// Representation fed to the heads.
    features: Matrix,
    prediction: Prediction,
}

/// `x Wᵀ + b`.
fn affine(x: &Matrix, p: &ModuleParams) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), p.out_dim());
    for r in 0..x.rows() {
        let xr = x.row(r);
        for (o, v) in out.row_mut(r).iter_mut().enumerate() {
            let w = p.weight.row(o);
            *v = p.bias[o] + xr.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

fn relu(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

fn trace(model: &BranchedModel, task: usize, inputs: &Matrix) -> Trace {
    let path = model.task_path(task);
    let hidden = path.len() - 2;
    let mut act = inputs.clone();
    let mut layer_inputs = Vec::with_capacity(hidden);
    let mut pre = Vec::with_capacity(hidden);
    for &id in &path[..hidden] {
        let z = affine(&act, model.param(id));
        let next = relu(&z);
        layer_inputs.push(std::mem::replace(&mut act, next));
        pre.push(z);
    }
    let logits = affine(&act, model.param(path[hidden]));
    let boxes = affine(&act, model.param(path[hidden + 1]));
    Trace {
        path,
        inputs: layer_inputs,
        pre,
        features: act,
        prediction: Prediction { logits, boxes },
    }
}

/// Runs `batch` through the backbone, the task's module instances and its
/// heads.
pub fn forward(model: &BranchedModel, batch: &TaskBatch) -> Result<Prediction> {
    batch.validate(model)?;
    Ok(trace(model, batch.task_id, &batch.inputs).prediction)
}

/// Pre-activation output of every shareable module of `task`'s path for
/// the given inputs; used as feature dumps for similarity analysis.
pub fn module_features(model: &BranchedModel, task: usize, inputs: &Matrix) -> Result<Vec<Matrix>> {
    if task >= model.num_tasks() || inputs.cols() != model.dims().input_dim {
        return Err(Error::DimensionMismatch(
            "feature probe does not fit the model".into(),
        ));
    }
    let t = trace(model, task, inputs);
    let skip = model.backbone_ids().len();
    Ok(t.pre.into_iter().skip(skip).collect())
}

/// `w_cls · mean cross-entropy + w_box · mean squared box error`.
pub fn task_loss(pred: &Prediction, batch: &TaskBatch, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    let b = batch.len();
    if pred.logits.rows() != b || pred.boxes.shape() != (b, BOX_DIM) {
        return Err(Error::DimensionMismatch(
            "prediction does not match batch".into(),
        ));
    }
    let mut ce = 0.0;
    if weights.w_cls != 0.0 {
        for (r, &target) in batch.class_targets.iter().enumerate() {
            let row = pred.logits.row(r);
            ce += log_sum_exp(row) - row[target];
        }
        ce /= b as f64;
    }
    let mse = if weights.w_box != 0.0 {
        pred.boxes
            .as_slice()
            .iter()
            .zip(batch.box_targets.as_slice())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / (b * BOX_DIM) as f64
    } else {
        0.0
    };
    Ok(weights.w_cls * ce + weights.w_box * mse)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Gradients of one task's loss for every parameter object of a model.
/// Objects off the task's path hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub task_id: usize,
    pub grads: Vec<ModuleParams>,
}

impl GradientSet {
    pub fn zeros_for(model: &BranchedModel, task_id: usize) -> Self {
        GradientSet {
            task_id,
            grads: model
                .params()
                .iter()
                .map(ModuleParams::zeros_like)
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &ModuleParams {
        &self.grads[id.0]
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.grads.iter().flat_map(ModuleParams::values).collect()
    }
}

pub fn backward(
    model: &BranchedModel,
    batch: &TaskBatch,
    weights: &LossWeights,
) -> Result<GradientSet> {
    loss_and_gradients(model, batch, weights).map(|(_, g)| g)
}

/// Loss and exact analytic gradients for one task's batch.
pub fn loss_and_gradients(
    model: &BranchedModel,
    batch: &TaskBatch,
    weights: &LossWeights,
) -> Result<(f64, GradientSet)> {
    batch.validate(model)?;
    weights.validate()?;
    let t = trace(model, batch.task_id, &batch.inputs);
    let loss = task_loss(&t.prediction, batch, weights)?;
    let b = batch.len() as f64;

    // dL/dlogits = w_cls (softmax − onehot) / B
    let mut d_logits = Matrix::zeros(t.prediction.logits.rows(), t.prediction.logits.cols());
    if weights.w_cls != 0.0 {
        for (r, &target) in batch.class_targets.iter().enumerate() {
            let row = t.prediction.logits.row(r);
            let lse = log_sum_exp(row);
            for (c, d) in d_logits.row_mut(r).iter_mut().enumerate() {
                let p = (row[c] - lse).exp();
                *d = weights.w_cls * (p - (c == target) as u8 as f64) / b;
            }
        }
    }
    // dL/dboxes = w_box · 2 (pred − target) / (4B)
    let mut d_boxes = Matrix::zeros(t.prediction.boxes.rows(), BOX_DIM);
    if weights.w_box != 0.0 {
        let scale = 2.0 * weights.w_box / (b * BOX_DIM as f64);
        for ((d, p), y) in d_boxes
            .as_mut_slice()
            .iter_mut()
            .zip(t.prediction.boxes.as_slice())
            .zip(batch.box_targets.as_slice())
        {
            *d = scale * (p - y);
        }
    }

    let mut grads = GradientSet::zeros_for(model, batch.task_id);
    let hidden = t.path.len() - 2;
    let class_id = t.path[hidden];
    let box_id = t.path[hidden + 1];
    grads.grads[class_id.0] = affine_param_grad(&d_logits, &t.features)?;
    grads.grads[box_id.0] = affine_param_grad(&d_boxes, &t.features)?;
    let mut d_act = d_logits.matmul(&model.param(class_id).weight)?;
    let from_box = d_boxes.matmul(&model.param(box_id).weight)?;
    for (a, b) in d_act.as_mut_slice().iter_mut().zip(from_box.as_slice()) {
        *a += b;
    }

    for k in (0..hidden).rev() {
        let mut d_pre = d_act;
        for (d, z) in d_pre.as_mut_slice().iter_mut().zip(t.pre[k].as_slice()) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        let id = t.path[k];
        grads.grads[id.0] = affine_param_grad(&d_pre, &t.inputs[k])?;
        d_act = d_pre.matmul(&model.param(id).weight)?;
    }
    Ok((loss, grads))
}

/// Gradient of an affine layer's parameters given the output gradient.
fn affine_param_grad(d_out: &Matrix, input: &Matrix) -> Result<ModuleParams> {
    let weight = d_out.t_matmul(input)?;
    let mut bias = vec![0.0; d_out.cols()];
    for row in d_out.row_iter() {
        for (b, d) in bias.iter_mut().zip(row) {
            *b += d;
        }
    }
    Ok(ModuleParams { weight, bias })
}
