use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn branchforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchforge"))
        .args(args)
        .env_remove("BRANCHFORGE_THREADS")
        .output()
        .expect("spawn branchforge")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RDM: &str = r#"{"num_tasks": 3, "num_modules": 2, "matrices": [
  [[0.0, 0.1, 0.9], [0.1, 0.0, 0.8], [0.9, 0.8, 0.0]],
  [[0.0, 0.2, 0.7], [0.2, 0.0, 0.6], [0.7, 0.6, 0.0]]
]}"#;

const COSTS: &str =
    r#"{"backbone_latency": 2.0, "module_latencies": [1.0, 1.0], "head_latency": 0.5}"#;

fn search_fixtures(dir: &Path) {
    fs::write(dir.join("rdm.json"), RDM).unwrap();
    fs::write(dir.join("costs.json"), COSTS).unwrap();
}

#[test]
fn no_subcommand_prints_usage_and_fails() {
    let out = branchforge(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_a_validation_error() {
    let out = branchforge(&["search", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_and_version() {
    for args in [
        &["--help"][..],
        &["search", "--help"],
        &["--version"],
        &["train", "--version"],
    ] {
        let out = branchforge(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn gradcheck_passes() {
    let out = branchforge(&["gradcheck", "--seed", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let worst: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(worst < 1e-4);
}

#[test]
fn search_writes_plan_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    search_fixtures(dir.path());
    let plan = dir.path().join("plan.json");
    let pareto = dir.path().join("pareto.json");
    let out = branchforge(&[
        "search",
        "--rdm",
        p(&dir.path().join("rdm.json")),
        "--costs",
        p(&dir.path().join("costs.json")),
        "--budget",
        "0.8",
        "--pareto",
        p(&pareto),
        "--out",
        p(&plan),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&plan).unwrap();
    assert!(text.contains("\"partitions\""));
    assert!(pareto.exists());
    assert_eq!(
        fs::read_to_string(dir.path().join("rdm.json")).unwrap(),
        RDM
    );
    assert_eq!(
        fs::read_to_string(dir.path().join("costs.json")).unwrap(),
        COSTS
    );

    // same inputs, same bytes
    let again = dir.path().join("plan2.json");
    let rerun = branchforge(&[
        "search",
        "--rdm",
        p(&dir.path().join("rdm.json")),
        "--costs",
        p(&dir.path().join("costs.json")),
        "--budget",
        "0.8",
        "--out",
        p(&again),
    ]);
    assert_eq!(rerun.status.code(), Some(0));
    assert_eq!(fs::read(&again).unwrap(), fs::read(&plan).unwrap());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("costs.json"), COSTS).unwrap();
    let out = branchforge(&[
        "search",
        "--rdm",
        p(&dir.path().join("nope.json")),
        "--costs",
        p(&dir.path().join("costs.json")),
        "--out",
        p(&dir.path().join("plan.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.json"));
}

#[test]
fn infeasible_budget_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    search_fixtures(dir.path());
    let out = branchforge(&[
        "search",
        "--rdm",
        p(&dir.path().join("rdm.json")),
        "--costs",
        p(&dir.path().join("costs.json")),
        "--budget",
        "0.01",
        "--out",
        p(&dir.path().join("plan.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("plan.json").exists());
}

#[test]
fn malformed_json_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    search_fixtures(dir.path());
    fs::write(dir.path().join("costs.json"), "{\"backbone_latency\": 1.0,").unwrap();
    let out = branchforge(&[
        "search",
        "--rdm",
        p(&dir.path().join("rdm.json")),
        "--costs",
        p(&dir.path().join("costs.json")),
        "--out",
        p(&dir.path().join("plan.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("spec.json"),
        r#"{"num_tasks": 3, "class_counts": [3, 3, 2], "input_dim": 6,
            "examples_per_task": [80, 80, 60],
            "relatedness": [[1.0, 0.9, 0.1], [0.9, 1.0, 0.1], [0.1, 0.1, 1.0]],
            "noise": 0.5, "seed": 4}"#,
    )
    .unwrap();
    fs::write(
        d.join("affinity.json"),
        r#"{"layout": {"backbone_dims": [8], "module_dims": [8, 8]},
            "learning_rate": 0.05, "epochs": 3, "batch_size": 16, "probes_per_task": 10}"#,
    )
    .unwrap();
    fs::write(d.join("costs.json"), COSTS).unwrap();
    fs::write(
        d.join("train.json"),
        r#"{"learning_rate": 0.05, "epochs": 3, "seed": 1,
            "tasks": [{"batch_size": 8}, {"batch_size": 8}, {"batch_size": 8, "period": 2}],
            "layout": {"backbone_dims": [8], "module_dims": [8, 8]}}"#,
    )
    .unwrap();

    let data = d.join("data");
    let ok = |args: &[&str]| {
        let out = branchforge(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
        out
    };
    ok(&[
        "synth",
        "--spec",
        p(&d.join("spec.json")),
        "--out",
        p(&data),
    ]);
    assert!(data.join("task_3.csv").exists());

    let dumps = d.join("dumps");
    ok(&[
        "rsa",
        "--data",
        p(&data),
        "--affinity",
        p(&d.join("affinity.json")),
        "--dumps",
        p(&dumps),
        "--out",
        p(&d.join("rdm.json")),
    ]);
    ok(&[
        "rsa",
        "--manifest",
        p(&dumps.join("manifest.json")),
        "--out",
        p(&d.join("rdm_again.json")),
    ]);
    assert_eq!(
        fs::read(d.join("rdm.json")).unwrap(),
        fs::read(d.join("rdm_again.json")).unwrap()
    );

    ok(&[
        "search",
        "--rdm",
        p(&d.join("rdm.json")),
        "--costs",
        p(&d.join("costs.json")),
        "--budget",
        "0.9",
        "--mode",
        "tree",
        "--out",
        p(&d.join("plan.json")),
    ]);
    ok(&[
        "train",
        "--config",
        p(&d.join("train.json")),
        "--plan",
        p(&d.join("plan.json")),
        "--data",
        p(&data),
        "--out",
        p(&d.join("model.bin")),
        "--report",
        p(&d.join("report.json")),
    ]);
    let table = fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(
        table.lines().next(),
        Some("epoch,task_1,task_2,task_3,validation")
    );
    assert_eq!(table.lines().count(), 4);

    let out = ok(&[
        "eval",
        "--model",
        p(&d.join("model.bin")),
        "--data",
        p(&data),
    ]);
    let metrics = String::from_utf8_lossy(&out.stdout);
    assert_eq!(metrics.matches("\"accuracy\"").count(), 3, "{metrics}");

    let wrong = branchforge(&[
        "eval",
        "--model",
        p(&d.join("report.json")),
        "--data",
        p(&data),
    ]);
    assert_ne!(wrong.status.code(), Some(0));
}
