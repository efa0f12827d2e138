use std::path::Path;
use std::process::{Command, Output};

use taskmap::io::{read_json, write_json, CalibrationSamples, OutputMap};
use taskmap::{LikelihoodModel, MetricsReport, SynthConfig};

fn taskmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskmap")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = taskmap(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn small_config(dir: &Path) -> String {
    let config = SynthConfig {
        n_objects: 3,
        gaussians_per_object: 120,
        n_frames: 12,
        ..SynthConfig::default()
    };
    let file = path(dir, "config.json");
    write_json(Path::new(&file), &config).unwrap();
    file
}

#[test]
fn synth_map_eval_select_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = small_config(d);
    ok(&["synth", "--config", &config, "--out", &path(d, "data"), "--seed", "2"]);
    ok(&[
        "map",
        "--scene",
        &path(d, "data/scene.json"),
        "--tasks",
        &path(d, "data/tasks.json"),
        "--log",
        &path(d, "data/observations.jsonl"),
        "--out",
        &path(d, "map.json"),
        "--knn-k",
        "6",
        "--knn-alpha",
        "2.5",
        "--depth-tol",
        "0.04",
        "--stop-delta",
        "0.002",
    ]);
    let map: OutputMap = read_json(&d.join("map.json")).unwrap();
    assert!(!map.objects.is_empty());
    assert_eq!(map.task_count(), Some(3));

    let table = ok(&[
        "eval",
        "--map",
        &path(d, "map.json"),
        "--ground-truth",
        &path(d, "data/ground_truth.json"),
        "--out",
        &path(d, "metrics.json"),
    ]);
    assert!(table.contains("Strict-osR"));
    let metrics: MetricsReport = read_json(&d.join("metrics.json")).unwrap();
    assert!(metrics.strict_osr > 0.0);

    let by_name: OutputMap = serde_json::from_str(&ok(&[
        "select",
        "--map",
        &path(d, "map.json"),
        "--task",
        "task 1",
        "--tasks",
        &path(d, "data/tasks.json"),
    ]))
    .unwrap();
    let by_index: OutputMap =
        serde_json::from_str(&ok(&["select", "--map", &path(d, "map.json"), "--task", "1", "-k", "1"])).unwrap();
    assert_eq!(by_name, by_index);
    assert_eq!(by_index.objects.len(), 1);
    let fraction: OutputMap = serde_json::from_str(&ok(&[
        "select",
        "--map",
        &path(d, "map.json"),
        "--task",
        "1",
        "--fraction",
        "0.8",
    ]))
    .unwrap();
    assert!(fraction.objects.contains(&by_index.objects[0]));
}

#[test]
fn ablation_switches_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--config", &small_config(d), "--out", &path(d, "data")]);
    for flags in [
        &["--no-outlier-reject"][..],
        &["--no-knn"],
        &["--no-bayes-update"],
        &["--retain-fraction", "0.9", "--prune-threshold", "0.2"],
    ] {
        let mut args = vec![
            "map",
            "--scene",
            &path(d, "data/scene.json"),
            "--tasks",
            &path(d, "data/tasks.json"),
            "--log",
            &path(d, "data/observations.jsonl"),
            "--out",
            &path(d, "map.json"),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        args.extend(flags.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs);
    }
}

#[test]
fn ablate_prints_a_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&[
        "ablate",
        "--config",
        &small_config(d),
        "--seeds",
        "1",
        "--iou-samples",
        "20000",
        "--out",
        &path(d, "rows.json"),
    ]);
    assert_eq!(out.lines().count(), 9);
    assert!(out.lines().next().unwrap().contains("S-OsR"));
}

#[test]
fn calibrate_writes_a_likelihood_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let samples = CalibrationSamples {
        negative_scores: vec![0.18, 0.2, 0.22, 0.2],
        positive_scores: Some(vec![0.26, 0.28]),
    };
    write_json(&d.join("s.json"), &samples).unwrap();
    ok(&["calibrate", "--samples", &path(d, "s.json"), "--out", &path(d, "lk.json")]);
    let model: LikelihoodModel = read_json(&d.join("lk.json")).unwrap();
    assert!((model.mu_neg - 0.2).abs() < 1e-12);
    assert!((model.mu_pos - 0.27).abs() < 1e-12);
    assert_eq!(model.prior_relevant, 0.05);
}

#[test]
fn bad_inputs_fail_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("tasks.json"), r#"["a", "b"]"#).unwrap();
    std::fs::write(d.join("scene.json"), r#"{"gaussians": [{"id": 0, "center": [0, 0, 1]}]}"#).unwrap();
    let frame = r#"{"frame_id":0,"camera":{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[0,0,0],"fx":10,"fy":10,"cx":2,"cy":2,"width":4,"height":4},"masks":[{"mask_id":0,"gaussian_ids":[0],"scores":[0.3]}]}"#;
    std::fs::write(d.join("log.jsonl"), format!("\n{frame}\n")).unwrap();
    let out = taskmap(&[
        "map",
        "--scene",
        &path(d, "scene.json"),
        "--tasks",
        &path(d, "tasks.json"),
        "--log",
        &path(d, "log.jsonl"),
        "--out",
        &path(d, "map.json"),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("score"), "{err}");

    let broken = r#"{"frame_id":0,"camera":{"rotation":[1,0,0]}}"#;
    std::fs::write(d.join("log.jsonl"), format!("\n{broken}\n")).unwrap();
    let out = taskmap(&[
        "map",
        "--scene",
        &path(d, "scene.json"),
        "--tasks",
        &path(d, "tasks.json"),
        "--log",
        &path(d, "log.jsonl"),
        "--out",
        &path(d, "map.json"),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success() && err.contains(":2:"), "{err}");

    write_json(&d.join("map.json"), &OutputMap { objects: vec![] }).unwrap();
    let out = taskmap(&["select", "--map", &path(d, "map.json"), "--task", "cups"]);
    assert!(!out.status.success());
}
