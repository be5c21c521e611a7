//! The `finrot` binary: outputs, exit codes and manifests.

use std::path::Path;
use std::process::{Command, Output};

use finrot::mvnet::train::DataConfig;
use finrot::mvnet::{ExperimentConfig, ModelConfig, SupportSpec, TrainConfig};
use finrot::synth::DatasetMode;

fn finrot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finrot"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = finrot(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn structural_outputs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for args in [
        &["group", "--name", "ico"][..],
        &["hspace", "--group", "ico", "--kind", "f20"],
        &["views", "--kind", "20x3"],
    ] {
        ok(a.path(), args);
        ok(b.path(), args);
    }
    for file in ["group.json", "hspace.json", "views.json"] {
        assert_eq!(read(a.path().join(file)), read(b.path().join(file)), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(a.path().join("group.manifest.json"))).unwrap();
    assert!(manifest.to_string().contains("group.json"));
    assert!(a.path().join("group.timestamp").exists());
}

#[test]
fn verify_accepts_an_intact_group_and_names_the_broken_axiom() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["group", "--name", "oct"]);
    let path = dir.path().join("group.json");
    ok(dir.path(), &["group", "--verify", path.to_str().unwrap()]);

    let mut file: serde_json::Value = serde_json::from_slice(&read(&path)).unwrap();
    let row = file["cayley"][2].as_array_mut().unwrap();
    row[3] = row[4].clone();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_vec(&file).unwrap()).unwrap();
    let out = finrot(dir.path(), &["group", "--verify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("latin square"));

    std::fs::write(&bad, b"{\"name\": \"ico\"}").unwrap();
    assert_eq!(finrot(dir.path(), &["group", "--verify", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(finrot(dir.path(), &["group", "--name", "q7"]).status.code(), Some(2));
    assert_eq!(finrot(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(finrot(dir.path(), &["eval", "--ckpt", "missing"]).status.code(), Some(2));
    assert_eq!(finrot(dir.path(), &["check", "--suite", "nonsense"]).status.code(), Some(2));
}

#[test]
fn check_runs_a_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["check", "--suite", "groups", "--verbose"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("check.json"))).unwrap();
    assert!(!report.as_array().unwrap().is_empty());
}

#[test]
fn data_writes_views_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["data", "--classes", "2", "--n-train", "1", "--n-test", "1", "--views", "12x5"]);
    let csv = String::from_utf8(read(dir.path().join("data/manifest.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn train_eval_and_viz_on_a_tiny_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        data: DataConfig { classes: 2, n_train: 2, n_test: 2, mode: DatasetMode::RotatedSO3, seed: 1 },
        model: ModelConfig {
            encoder_widths: vec![4],
            encoder_strides: vec![2],
            proj_dim: 4,
            head_widths: vec![4],
            support: SupportSpec::Greedy(6),
            classes: 2,
            ..Default::default()
        },
        train: TrainConfig { epochs: 2, batch_size: 2, seed: 1, ..Default::default() },
        ..Default::default()
    };
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, serde_json::to_string(&config).unwrap()).unwrap();
    ok(dir.path(), &["train", "--config", cfg.to_str().unwrap()]);
    let ckpt = dir.path().join("ckpt");
    assert!(String::from_utf8(read(ckpt.join("metrics.csv"))).unwrap().lines().count() >= 3);

    let ckpt = ckpt.to_str().unwrap();
    ok(dir.path(), &["eval", "--ckpt", ckpt, "--views", "30"]);
    let eval: serde_json::Value = serde_json::from_slice(&read(dir.path().join("eval.json"))).unwrap();
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    ok(dir.path(), &["viz", "--ckpt", ckpt, "--layer", "1"]);
    let ply = String::from_utf8(read(dir.path().join("features.ply"))).unwrap();
    assert!(ply.contains("element face 60"), "{}", &ply[..ply.len().min(300)]);

    ok(dir.path(), &["jitter", "--ckpt", ckpt, "--sigma", "0", "--sigma", "15"]);
    let csv = String::from_utf8(read(dir.path().join("jitter.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
