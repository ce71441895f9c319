use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use branchforge_core::data::{generate_synthetic_tasks, SynthSpec};
use branchforge_core::model::{build_model, TaskBatch};
use branchforge_core::train::{
    mean_loss, train, train_step, ModelLayout, TaskDataset, TrainConfig, Trainer,
};
use branchforge_core::{LossWeights, Matrix, ModelDims, SharingPlan};

fn small_layout() -> ModelLayout {
    ModelLayout {
        backbone_dims: vec![8],
        module_dims: vec![8, 8],
    }
}

#[test]
fn joint_losses_close_to_pooled_baseline() {
    let mut spec = SynthSpec::uniform(2, 3, 6, 200, 1.0, 3);
    spec.noise = 1.0;
    let tasks = generate_synthetic_tasks(&spec).unwrap();
    let layout = small_layout();
    let mut cfg = TrainConfig::uniform(2, 0.05, 40, 10);
    cfg.layout = layout.clone();
    let joint = build_model(
        &SharingPlan::fully_shared(2, 2),
        &layout.dims(6, vec![3, 3]),
        0,
    )
    .unwrap();
    let (joint, _) = train(joint, &tasks.datasets, &cfg).unwrap();

    let pooled = TaskDataset::concat(0, &[&tasks.datasets[0], &tasks.datasets[1]]).unwrap();
    let mut single_cfg = TrainConfig::uniform(1, 0.05, 40, 20);
    single_cfg.layout = layout.clone();
    let single = build_model(
        &SharingPlan::fully_shared(1, 2),
        &layout.dims(6, vec![3]),
        0,
    )
    .unwrap();
    let (single, _) = train(single, std::slice::from_ref(&pooled), &single_cfg).unwrap();

    let w = LossWeights::default();
    for t in 0..2 {
        let test = tasks.generators[t].draw(500, 77).unwrap();
        let joint_loss = mean_loss(&joint, &test, &w).unwrap();
        let single_loss = mean_loss(&single, &test.clone().with_task_id(0), &w).unwrap();
        assert!(
            (joint_loss - single_loss).abs() <= 0.2 * single_loss,
            "task {t}: joint {joint_loss} vs pooled {single_loss}"
        );
    }
}

#[test]
fn task_order_within_a_step_is_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = ModelDims {
        input_dim: 3,
        backbone_dims: vec![4],
        module_dims: vec![4, 3],
        class_counts: vec![2, 3, 2],
    };
    let plan = enumerate_some_plan();
    let model = build_model(&plan, &dims, 2).unwrap();
    let batches: Vec<TaskBatch> = (0..3)
        .map(|t| TaskBatch {
            task_id: t,
            inputs: Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0)),
            class_targets: (0..4)
                .map(|_| rng.random_range(0..dims.class_counts[t]))
                .collect(),
            box_targets: Matrix::from_fn(4, 4, |_, _| rng.random_range(0.0..1.0)),
        })
        .collect();
    let cfg = TrainConfig::uniform(3, 0.1, 1, 4);
    let mut results = Vec::new();
    for order in [[0, 1, 2], [2, 0, 1], [1, 2, 0]] {
        let mut map = BTreeMap::new();
        for t in order {
            map.insert(t, batches[t].clone());
        }
        let mut m = model.clone();
        train_step(&mut m, &map, &cfg).unwrap();
        results.push(m.flat_values());
    }
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}

fn enumerate_some_plan() -> SharingPlan {
    use branchforge_core::Partition;
    SharingPlan::new(
        3,
        vec![
            Partition::from_groups(3, &[vec![0, 1], vec![2]]).unwrap(),
            Partition::split(3),
        ],
    )
    .unwrap()
}

#[test]
fn training_is_deterministic() {
    let tasks = generate_synthetic_tasks(&SynthSpec::uniform(3, 2, 5, 60, 0.5, 8)).unwrap();
    let mut cfg = TrainConfig::uniform(3, 0.05, 4, 8);
    cfg.layout = small_layout();
    cfg.tasks[2].period = 3;
    cfg.seed = 11;
    let dims = cfg.layout.dims(5, vec![2, 2, 2]);
    let run = || {
        let m = build_model(&SharingPlan::fully_shared(3, 2), &dims, 4).unwrap();
        Trainer::new(cfg.clone())
            .with_validation(tasks.datasets.clone())
            .run(m, &tasks.datasets)
            .unwrap()
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(ra, rb);
    assert_eq!(a.flat_values(), b.flat_values());
    assert!(ra
        .epochs
        .iter()
        .all(|e| e.task_losses.iter().flatten().all(|l| l.is_finite())));
}

#[test]
fn contributions_follow_periods() {
    let tasks = generate_synthetic_tasks(&SynthSpec::uniform(3, 2, 4, 30, 0.5, 0)).unwrap();
    for periods in [[1, 2, 3], [1, 1, 7], [4, 1, 5]] {
        let mut cfg = TrainConfig::uniform(3, 0.01, 3, 5);
        cfg.layout = small_layout();
        for (s, p) in cfg.tasks.iter_mut().zip(periods) {
            s.period = p;
        }
        let m = build_model(
            &SharingPlan::fully_split(3, 2),
            &cfg.layout.dims(4, vec![2, 2, 2]),
            0,
        )
        .unwrap();
        let (_, report) = train(m, &tasks.datasets, &cfg).unwrap();
        let k = report.total_iterations;
        assert_eq!(k, 3 * 6);
        let expected: Vec<usize> = periods.iter().map(|p| k / p).collect();
        assert_eq!(report.iterations_per_task, expected);
    }
}
