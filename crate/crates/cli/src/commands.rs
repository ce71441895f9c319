use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use branchforge_core::data::{
    generate_synthetic_tasks, load_checkpoint, load_costs, load_datasets, load_feature_dumps,
    load_json, load_plan, load_rdm, load_train_config, report_loss_csv, save_checkpoint,
    save_datasets, save_feature_dumps, save_json, save_plan, save_rdm, write_text, SynthSpec,
};
use branchforge_core::model::{build_model, grad_check, LossWeights, ModelDims, TaskBatch};
use branchforge_core::pipeline::{
    feature_dumps, probe_from_datasets, run_pipeline, train_reference_models, AffinityConfig,
    PipelineConfig,
};
use branchforge_core::rsa::{compute_rdm_stack_with, CkaOptions};
use branchforge_core::search::{enumerate_partitions, enumerate_plans, select_architecture};
use branchforge_core::train::{evaluate, evolve_hyperparams, mean_loss, SearchSpace, Trainer};
use branchforge_core::{Error, Matrix, SharingPlan, TaskDataset, TrainConfig};

use super::{
    Command, EvalArgs, EvolveArgs, GradcheckArgs, PipelineArgs, RsaArgs, SearchArgs, SynthArgs,
    TrainArgs,
};

/// Gradients are considered correct below this relative error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Share of each task held out for the evolution objective.
const HOLDOUT_FRACTION: f64 = 0.2;

pub enum Failure {
    /// A check ran to completion and did not pass.
    Check(String),
    Error(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = Result<(), Failure>;

pub fn is_io(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        cause.is::<std::io::Error>() || cause.downcast_ref::<Error>().is_some_and(Error::is_io)
    })
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Rsa(a) => rsa(a),
        Command::Search(a) => search(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Evolve(a) => evolve(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn synth(args: SynthArgs) -> Outcome {
    let mut spec: SynthSpec = load_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let tasks = generate_synthetic_tasks(&spec)?;
    save_datasets(&args.out, &tasks.datasets)?;
    eprintln!(
        "wrote {} tasks ({} examples) to {}",
        tasks.datasets.len(),
        tasks.datasets.iter().map(TaskDataset::len).sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn rsa(args: RsaArgs) -> Outcome {
    let options = CkaOptions {
        center: !args.no_center,
    };
    let dumps = if let Some(manifest) = &args.manifest {
        load_feature_dumps(manifest)?.1
    } else {
        let data = args.data.as_ref().expect("clap enforces one source");
        let datasets = load_datasets(data)?;
        let mut config: AffinityConfig = match &args.affinity {
            Some(path) => load_json(path)?,
            None => AffinityConfig::default(),
        };
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        let models = train_reference_models(&datasets, &config)?;
        let probe = probe_from_datasets(&datasets, config.probes_per_task)?;
        let dumps = feature_dumps(&models, &probe)?;
        if let Some(dir) = &args.dumps {
            save_feature_dumps(dir, &dumps)?;
        }
        dumps
    };
    let stack = compute_rdm_stack_with(&dumps, options)?;
    save_rdm(&args.out, &stack)?;
    eprintln!(
        "wrote {} RDMs over {} tasks to {}",
        stack.num_modules(),
        stack.num_tasks(),
        args.out.display()
    );
    Ok(())
}

fn search(args: SearchArgs) -> Outcome {
    let rdms = load_rdm(&args.rdm)?;
    let costs = load_costs(&args.costs)?;
    if costs.num_modules() != rdms.num_modules() {
        return Err(anyhow!(
            "cost model has {} modules but the RDM stack has {}",
            costs.num_modules(),
            rdms.num_modules()
        )
        .into());
    }
    let plans = enumerate_plans(rdms.num_tasks(), rdms.num_modules(), args.mode)?;
    let selection = select_architecture(plans, &rdms, &costs, args.budget)?;
    save_plan(&args.out, &selection.best.plan)?;
    if let Some(path) = &args.pareto {
        save_json(path, &selection.pareto)?;
    }
    eprintln!(
        "evaluated {} plans; selected {} (rsa score {:.6}, computational score {:.6})",
        selection.evaluated,
        selection.best.plan,
        selection.best.rsa_score,
        selection.best.computational_score
    );
    Ok(())
}

fn check_tasks(
    plan: &SharingPlan,
    datasets: &[TaskDataset],
    config: &TrainConfig,
) -> anyhow::Result<()> {
    if plan.num_tasks() != datasets.len() || config.num_tasks() != datasets.len() {
        bail!(
            "plan has {} tasks, configuration {} and data {}",
            plan.num_tasks(),
            config.num_tasks(),
            datasets.len()
        );
    }
    if plan.num_modules() != config.layout.module_dims.len() {
        bail!(
            "plan covers {} modules but the layout has {}",
            plan.num_modules(),
            config.layout.module_dims.len()
        );
    }
    Ok(())
}

fn dims_for(config: &TrainConfig, datasets: &[TaskDataset]) -> ModelDims {
    config.layout.dims(
        datasets[0].input_dim(),
        datasets.iter().map(TaskDataset::num_classes).collect(),
    )
}

fn train(args: TrainArgs) -> Outcome {
    let mut config = load_train_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let plan = load_plan(&args.plan)?;
    let datasets = load_datasets(&args.data)?;
    check_tasks(&plan, &datasets, &config)?;
    let model = build_model(&plan, &dims_for(&config, &datasets), config.seed)?;
    let mut trainer = Trainer::new(config);
    if let Some(dir) = &args.validation {
        trainer = trainer.with_validation(load_datasets(dir)?);
    }
    let (model, report) = trainer.run(model, &datasets)?;
    save_checkpoint(&args.out, &model)?;
    save_json(&args.report, &report)?;
    let csv_path = args
        .loss_csv
        .unwrap_or_else(|| args.report.with_extension("csv"));
    write_text(&csv_path, &report_loss_csv(&report))?;
    for m in &report.final_metrics {
        eprintln!(
            "task {}: accuracy {:.4}, box mse {:.6}",
            m.task_id + 1,
            m.accuracy,
            m.box_mse
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Outcome {
    let model = load_checkpoint(&args.model)?;
    let datasets = load_datasets(&args.data)?;
    if datasets.len() != model.num_tasks() {
        return Err(anyhow!(
            "model has {} tasks, data {}",
            model.num_tasks(),
            datasets.len()
        )
        .into());
    }
    let metrics = datasets
        .iter()
        .map(|d| evaluate(&model, d))
        .collect::<Result<Vec<_>, _>>()?;
    match &args.out {
        Some(path) => save_json(path, &metrics)?,
        None => print!("{}", branchforge_core::data::to_json(&metrics)?),
    }
    Ok(())
}

/// A random model over a random plan, with one random batch per task.
fn random_instance(
    seed: u64,
) -> anyhow::Result<(branchforge_core::BranchedModel, Vec<TaskBatch>, LossWeights)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_tasks = rng.random_range(1..=3);
    let num_modules = rng.random_range(1..=3);
    let dims = ModelDims {
        input_dim: rng.random_range(2..=5),
        backbone_dims: (0..rng.random_range(0..=2))
            .map(|_| rng.random_range(2..=6))
            .collect(),
        module_dims: (0..num_modules).map(|_| rng.random_range(2..=6)).collect(),
        class_counts: (0..num_tasks).map(|_| rng.random_range(2..=4)).collect(),
    };
    let partitions = enumerate_partitions(num_tasks)?;
    let plan = SharingPlan::new(
        num_tasks,
        (0..num_modules)
            .map(|_| partitions[rng.random_range(0..partitions.len())].clone())
            .collect(),
    )?;
    let model = build_model(&plan, &dims, rng.random())?;
    let batches = (0..num_tasks)
        .map(|t| {
            let b = rng.random_range(1..=6);
            TaskBatch {
                task_id: t,
                inputs: Matrix::from_fn(b, dims.input_dim, |_, _| rng.random_range(-2.0..2.0)),
                class_targets: (0..b)
                    .map(|_| rng.random_range(0..dims.class_counts[t]))
                    .collect(),
                box_targets: Matrix::from_fn(b, 4, |_, _| rng.random_range(0.0..1.0)),
            }
        })
        .collect();
    let weights = LossWeights::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0))?;
    Ok((model, batches, weights))
}

fn gradcheck(args: GradcheckArgs) -> Outcome {
    let (model, batches, weights) = random_instance(args.seed)?;
    let mut worst: f64 = 0.0;
    for batch in &batches {
        worst = worst.max(grad_check(&model, batch, &weights, args.epsilon)?);
    }
    println!("{worst:e}");
    if worst < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "max relative error {worst:e} is not below {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

/// Splits off the last `fraction` of each dataset.
fn holdout(
    datasets: &[TaskDataset],
    fraction: f64,
) -> anyhow::Result<(Vec<TaskDataset>, Vec<TaskDataset>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for d in datasets {
        let n_val = ((d.len() as f64) * fraction).round() as usize;
        if n_val == 0 || n_val >= d.len() {
            bail!(
                "task {} is too small to hold out a validation split",
                d.task_id() + 1
            );
        }
        let (a, b) = d.examples().split_at(d.len() - n_val);
        train.push(TaskDataset::new(
            d.task_id(),
            d.num_classes(),
            d.input_dim(),
            a.to_vec(),
        )?);
        val.push(TaskDataset::new(
            d.task_id(),
            d.num_classes(),
            d.input_dim(),
            b.to_vec(),
        )?);
    }
    Ok((train, val))
}

fn evolve(args: EvolveArgs) -> Outcome {
    let base = load_train_config(&args.config)?;
    let space: SearchSpace = load_json(&args.space)?;
    let datasets = load_datasets(&args.data)?;
    let (train_sets, val_sets) = match &args.validation {
        Some(dir) => (datasets, load_datasets(dir)?),
        None => holdout(&datasets, HOLDOUT_FRACTION)?,
    };
    let plan = match &args.plan {
        Some(p) => load_plan(p)?,
        None => SharingPlan::fully_shared(train_sets.len(), base.layout.module_dims.len()),
    };
    check_tasks(&plan, &train_sets, &base)?;
    let dims = dims_for(&base, &train_sets);

    let result = evolve_hyperparams(&space, args.generations, args.population, args.seed, |h| {
        let mut cfg = base.clone();
        cfg.learning_rate = h.learning_rate;
        for t in &mut cfg.tasks {
            t.loss_weights.w_cls = h.w_cls;
            t.loss_weights.w_box = h.w_box;
        }
        let objective = || -> branchforge_core::Result<f64> {
            let model = build_model(&plan, &dims, cfg.seed)?;
            let (model, _) = branchforge_core::train::train(model, &train_sets, &cfg)?;
            // scored with the base weights so candidates are comparable
            let mut total = 0.0;
            for (d, s) in val_sets.iter().zip(&base.tasks) {
                total += mean_loss(&model, d, &s.loss_weights)?;
            }
            Ok(total)
        };
        objective().unwrap_or(f64::INFINITY)
    })?;
    match &args.out {
        Some(path) => save_json(path, &result)?,
        None => print!("{}", branchforge_core::data::to_json(&result)?),
    }
    eprintln!(
        "best objective {:.6}: learning rate {:.6}, w_cls {:.4}, w_box {:.4}",
        result.best_objective, result.best.learning_rate, result.best.w_cls, result.best.w_box
    );
    Ok(())
}

fn pipeline(args: PipelineArgs) -> Outcome {
    let mut config: PipelineConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.synth.seed = seed;
    }
    config.train.validate()?;
    let result = run_pipeline(&config)?;
    let out: &Path = &args.out;
    let path = |name: &str| -> PathBuf { out.join(name) };
    save_datasets(&path("data"), &result.tasks.datasets)?;
    save_rdm(&path("rdm.json"), &result.rdms)?;
    save_plan(&path("plan.json"), &result.selection.best.plan)?;
    save_json(&path("pareto.json"), &result.selection.pareto)?;
    save_checkpoint(&path("model.bin"), &result.model)?;
    save_json(&path("report.json"), &result.report)?;
    write_text(&path("report.csv"), &report_loss_csv(&result.report))
        .context("writing loss table")?;
    eprintln!(
        "selected {} (rsa score {:.6}, computational score {:.6})",
        result.selection.best.plan,
        result.selection.best.rsa_score,
        result.selection.best.computational_score
    );
    for m in &result.report.final_metrics {
        eprintln!(
            "task {}: accuracy {:.4}, box mse {:.6}",
            m.task_id + 1,
            m.accuracy,
            m.box_mse
        );
    }
    Ok(())
}
