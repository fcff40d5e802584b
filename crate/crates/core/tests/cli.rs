mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Instant;

use jitvp::cli::MINING_FILES;
use jitvp::metrics::METRIC_NAMES;

fn jitvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jitvp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = jitvp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn mine(repo: &Path, save: &Path, workers: usize) {
    ok(&[
        "mining",
        "-repo_name",
        "demo",
        "-repo_path",
        repo.to_str().unwrap(),
        "-repo_language",
        "C",
        "-dg_save_folder",
        save.to_str().unwrap(),
        "-workers",
        &workers.to_string(),
    ]);
}

fn model_args(save: &Path, model: &str) -> Vec<String> {
    [
        "-dg_save_folder",
        save.to_str().unwrap(),
        "-repo_name",
        "demo",
        "-model",
        model,
    ]
    .map(String::from)
    .to_vec()
}

fn with(base: &[String], cmd: &str) -> Vec<String> {
    let mut v = vec![cmd.to_string()];
    v.extend_from_slice(base);
    v
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn end_to_end_pipeline() {
    let repo = common::tempdir();
    common::build_pipeline_repo(repo.path());
    let save = common::tempdir();
    let start = Instant::now();

    mine(repo.path(), save.path(), 4);
    let out_dir = save.path().join("demo");
    for f in MINING_FILES {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let vfcs = std::fs::read_to_string(out_dir.join("vfcs.jsonl")).unwrap();
    assert_eq!(vfcs.lines().count(), 7);

    let base = model_args(save.path(), "lr");
    ok(&strs(&with(&base, "training")));
    assert!(out_dir.join("models/lr.artifact").exists());
    let eval = ok(&strs(&with(&base, "evaluating")));
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("results/lr/metrics.json")).unwrap()).unwrap();
    for name in METRIC_NAMES {
        let v = metrics[name].as_f64().unwrap_or_else(|| panic!("{name} missing"));
        assert!(v.is_finite());
    }
    let printed: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert_eq!(printed, metrics);

    let features = std::fs::read_to_string(out_dir.join("test.jsonl")).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_jitvp"))
        .args(strs(&with(&base, "inference")))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(features.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), features.lines().filter(|l| !l.trim().is_empty()).count());
    for l in &lines {
        let s = l["score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert!(l.get("label").is_none());
    }

    for model in ["la", "tlel", "vcc_linear"] {
        let base = model_args(save.path(), model);
        ok(&strs(&with(&base, "training")));
        ok(&strs(&with(&base, "evaluating")));
    }
    assert!(start.elapsed().as_secs() < 60, "took {:?}", start.elapsed());
}

#[test]
fn usage_and_runtime_errors_exit_one() {
    let save = common::tempdir();
    let s = save.path().to_str().unwrap();
    let out = jitvp(&["mining", "-repo_name", "demo", "-dg_save_folder", s]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("repo_path"));

    let out = jitvp(&["training", "-repo_name", "demo", "-dg_save_folder", s, "-model", "svm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("svm"));

    let out = jitvp(&["evaluating", "-repo_name", "demo", "-dg_save_folder", s, "-model", "lr"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("artifact not found"));

    let missing = save.path().join("nowhere");
    let out = jitvp(&[
        "mining",
        "-repo_name",
        "demo",
        "-dg_save_folder",
        s,
        "-repo_path",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn malformed_inference_line_is_named() {
    let repo = common::tempdir();
    common::build_pipeline_repo(repo.path());
    let save = common::tempdir();
    mine(repo.path(), save.path(), 2);
    let base = model_args(save.path(), "la");
    ok(&strs(&with(&base, "training")));
    let test = std::fs::read_to_string(save.path().join("demo/test.jsonl")).unwrap();
    let first = test.lines().next().unwrap();
    let input = save.path().join("bad.jsonl");
    std::fs::write(&input, format!("{first}\n{{\"commit_id\": 7\n")).unwrap();
    let mut args = with(&base, "inference");
    args.extend(["-input".to_string(), input.to_str().unwrap().to_string()]);
    let out = jitvp(&strs(&args));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn outputs_are_independent_of_worker_count() {
    let repo = common::tempdir();
    common::build_pipeline_repo(repo.path());
    let mut snapshots = Vec::new();
    let mut dirs = Vec::new();
    for workers in [1, 4, 16] {
        let save = common::tempdir();
        mine(repo.path(), save.path(), workers);
        let files: Vec<Vec<u8>> = MINING_FILES
            .iter()
            .map(|f| std::fs::read(save.path().join("demo").join(f)).unwrap())
            .collect();
        snapshots.push(files);
        dirs.push(save);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    assert_eq!(snapshots[0], snapshots[2]);

    let save = &dirs[0];
    let artifact = save.path().join("demo/models/tlel.artifact");
    ok(&strs(&with(&model_args(save.path(), "tlel"), "training")));
    let first = std::fs::read(&artifact).unwrap();
    ok(&strs(&with(&model_args(save.path(), "tlel"), "training")));
    assert_eq!(std::fs::read(&artifact).unwrap(), first);
}
