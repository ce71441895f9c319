use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::search::SharingPlan;

/// Width of the box regression output.
pub const BOX_DIM: usize = 4;

/// Layer widths of a branched model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub input_dim: usize,
    /// Output width of each shared backbone layer.
    pub backbone_dims: Vec<usize>,
    /// Output width of each shareable module.
    pub module_dims: Vec<usize>,
    /// Number of classes of each task.
    pub class_counts: Vec<usize>,
}

impl ModelDims {
    pub fn num_tasks(&self) -> usize {
        self.class_counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::DimensionMismatch(
                "input_dim must be positive".into(),
            ));
        }
        if self
            .backbone_dims
            .iter()
            .chain(&self.module_dims)
            .any(|&d| d == 0)
        {
            return Err(Error::DimensionMismatch(
                "layer widths must be positive".into(),
            ));
        }
        if self.class_counts.is_empty() {
            return Err(Error::DimensionMismatch(
                "at least one task is required".into(),
            ));
        }
        if let Some(t) = self.class_counts.iter().position(|&c| c < 2) {
            return Err(Error::DimensionMismatch(format!(
                "task {t} needs at least two classes"
            )));
        }
        Ok(())
    }

    /// Width of the representation fed to the heads.
    pub fn feature_dim(&self) -> usize {
        self.module_dims
            .last()
            .or(self.backbone_dims.last())
            .copied()
            .unwrap_or(self.input_dim)
    }
}

/// Weights (`out × in`) and bias (`out`) of one affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ModuleParams {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        ModuleParams {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.out_dim(), self.in_dim())
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_values(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    /// Value `k` in canonical order: weight row-major, then bias.
    pub fn value(&self, k: usize) -> f64 {
        let w = self.weight.as_slice();
        if k < w.len() {
            w[k]
        } else {
            self.bias[k - w.len()]
        }
    }

    pub fn value_mut(&mut self, k: usize) -> &mut f64 {
        let n = self.weight.as_slice().len();
        if k < n {
            &mut self.weight.as_mut_slice()[k]
        } else {
            &mut self.bias[k - n]
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weight.as_slice().iter().chain(&self.bias).copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weight
            .as_mut_slice()
            .iter_mut()
            .chain(self.bias.iter_mut())
    }

    pub fn same_shape(&self, other: &ModuleParams) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.len() == other.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

/// Index of a parameter object in a model's arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// What a parameter object is, in canonical arena order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamRole {
    Backbone { layer: usize },
    Module { module: usize, group: usize },
    ClassHead { task: usize },
    BoxHead { task: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchedModel {
    dims: ModelDims,
    plan: SharingPlan,
    params: Vec<ModuleParams>,
    roles: Vec<ParamRole>,
    backbone: Vec<ParamId>,
    /// `modules[m][g]`: instance of module `m` owned by group `g`.
    modules: Vec<Vec<ParamId>>,
    class_heads: Vec<ParamId>,
    box_heads: Vec<ParamId>,
    /// Tasks whose forward path reads each parameter object.
    owners: Vec<Vec<usize>>,
}

/// Allocates parameters for `plan` and initializes them uniformly in
/// `±1/√fan_in` from a seeded generator.
pub fn build_model(plan: &SharingPlan, dims: &ModelDims, seed: u64) -> Result<BranchedModel> {
    let shapes = arena_shapes(plan, dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = shapes
        .iter()
        .map(|&(out_dim, in_dim)| {
            let bound = 1.0 / (in_dim as f64).sqrt();
            let mut p = ModuleParams::zeros(out_dim, in_dim);
            for v in p.values_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            p
        })
        .collect();
    BranchedModel::from_parts(dims.clone(), plan.clone(), params)
}

/// Shapes of the arena in canonical order.
fn arena_shapes(plan: &SharingPlan, dims: &ModelDims) -> Result<Vec<(usize, usize)>> {
    dims.validate()?;
    if plan.num_tasks() != dims.num_tasks() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} tasks, model dims {}",
            plan.num_tasks(),
            dims.num_tasks()
        )));
    }
    if plan.num_modules() != dims.module_dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} shareable modules, model dims {}",
            plan.num_modules(),
            dims.module_dims.len()
        )));
    }
    let mut shapes = Vec::new();
    let mut width = dims.input_dim;
    for &out in &dims.backbone_dims {
        shapes.push((out, width));
        width = out;
    }
    for (m, &out) in dims.module_dims.iter().enumerate() {
        for _ in 0..plan.partition(m).num_groups() {
            shapes.push((out, width));
        }
        width = out;
    }
    for &classes in &dims.class_counts {
        shapes.push((classes, width));
        shapes.push((BOX_DIM, width));
    }
    Ok(shapes)
}

impl BranchedModel {
    /// Assembles a model from parameters listed in canonical order.
    pub fn from_parts(
        dims: ModelDims,
        plan: SharingPlan,
        params: Vec<ModuleParams>,
    ) -> Result<Self> {
        let shapes = arena_shapes(&plan, &dims)?;
        if shapes.len() != params.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameter objects, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (k, (p, &(out, inp))) in params.iter().zip(&shapes).enumerate() {
            if p.weight.shape() != (out, inp) || p.bias.len() != out {
                return Err(Error::DimensionMismatch(format!(
                    "parameter object {k} is {}x{} (+{}), expected {out}x{inp} (+{out})",
                    p.weight.rows(),
                    p.weight.cols(),
                    p.bias.len()
                )));
            }
        }

        let n = dims.num_tasks();
        let mut roles = Vec::with_capacity(params.len());
        let mut owners = Vec::with_capacity(params.len());
        let mut next = 0;
        let mut take = |role: ParamRole, tasks: Vec<usize>| {
            roles.push(role);
            owners.push(tasks);
            next += 1;
            ParamId(next - 1)
        };
        let backbone = (0..dims.backbone_dims.len())
            .map(|layer| take(ParamRole::Backbone { layer }, (0..n).collect()))
            .collect();
        let modules = plan
            .partitions()
            .iter()
            .enumerate()
            .map(|(module, part)| {
                part.groups()
                    .into_iter()
                    .enumerate()
                    .map(|(group, tasks)| take(ParamRole::Module { module, group }, tasks))
                    .collect()
            })
            .collect();
        let mut class_heads = Vec::with_capacity(n);
        let mut box_heads = Vec::with_capacity(n);
        for task in 0..n {
            class_heads.push(take(ParamRole::ClassHead { task }, vec![task]));
            box_heads.push(take(ParamRole::BoxHead { task }, vec![task]));
        }
        Ok(BranchedModel {
            dims,
            plan,
            params,
            roles,
            backbone,
            modules,
            class_heads,
            box_heads,
            owners,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn plan(&self) -> &SharingPlan {
        &self.plan
    }

    pub fn num_tasks(&self) -> usize {
        self.dims.num_tasks()
    }

    pub fn num_modules(&self) -> usize {
        self.modules.len()
    }

    /// Parameter objects in canonical order: backbone layers, shareable
    /// modules (by module, then by group), then per task the class head and
    /// the box head.
    pub fn params(&self) -> &[ModuleParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ModuleParams] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<ModuleParams> {
        self.params
    }

    pub fn param(&self, id: ParamId) -> &ModuleParams {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut ModuleParams {
        &mut self.params[id.0]
    }

    pub fn role(&self, id: ParamId) -> &ParamRole {
        &self.roles[id.0]
    }

    /// Tasks whose loss depends on parameter object `id`.
    pub fn owners(&self, id: ParamId) -> &[usize] {
        &self.owners[id.0]
    }

    pub fn backbone_ids(&self) -> &[ParamId] {
        &self.backbone
    }

    /// Number of instances of shareable module `m`.
    pub fn num_instances(&self, m: usize) -> usize {
        self.modules[m].len()
    }

    /// The instance of shareable module `m` used by `task`.
    pub fn module_id(&self, m: usize, task: usize) -> ParamId {
        self.modules[m][self.plan.partition(m).group_of(task)]
    }

    pub fn class_head_id(&self, task: usize) -> ParamId {
        self.class_heads[task]
    }

    pub fn box_head_id(&self, task: usize) -> ParamId {
        self.box_heads[task]
    }

    /// Mutable view of module `m` as seen by `task`. Tasks of the same group
    /// receive the same object.
    pub fn module_mut(&mut self, m: usize, task: usize) -> &mut ModuleParams {
        let id = self.module_id(m, task);
        self.param_mut(id)
    }

    /// Parameter objects on `task`'s forward path, in evaluation order
    /// (heads last: class head, then box head).
    pub fn task_path(&self, task: usize) -> Vec<ParamId> {
        let mut path = self.backbone.clone();
        path.extend((0..self.num_modules()).map(|m| self.module_id(m, task)));
        path.push(self.class_heads[task]);
        path.push(self.box_heads[task]);
        path
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(ModuleParams::num_values).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(ModuleParams::values).collect()
    }
}
