//! Drives the command-line surface in-process through the full
//! synth -> pkg build -> train -> eval -> decode pipeline, plus the
//! config/exit-code contract.

use std::path::Path;

use procplan::cli::run;
use procplan::pkg::deserialize_graph;
use procplan::synth::{read_dataset, read_world};

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("procplan").chain(args.iter().copied()))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn pipeline_produces_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.to_string_lossy().into_owned();

    assert_eq!(
        cli(&[
            "--out", &out, "synth", "--n-actions", "8", "--n-tasks", "2", "--embed-dim", "10",
            "--n-train", "40", "--n-test", "16", "--sigma", "0.3", "--branching", "1.5",
            "--seed", "3",
        ]),
        0
    );
    let world = read_world(&dir.join("world.json")).unwrap();
    assert_eq!(world.n_actions(), 8);
    let train_data = read_dataset(&dir.join("train.ldjson")).unwrap();
    assert_eq!(train_data.len(), 40);
    assert!(train_data.iter().all(|i| i.horizon() == 3));

    assert_eq!(
        cli(&[
            "--out", &out, "pkg", "build", "--corpus", &p(dir, "train.ldjson"),
            "--smoothing", "0.5", "--n-actions", "8",
        ]),
        0
    );
    // The artifact carries an injected run config and still satisfies the
    // documented graph schema.
    let graph = deserialize_graph(&dir.join("graph.json")).unwrap();
    assert_eq!(graph.n(), 8);
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("graph.json")).unwrap()).unwrap();
    assert_eq!(raw["run_config"]["command"], "pkg build");

    assert_eq!(
        cli(&["--out", &out, "pkg", "coverage", "--graph", &p(dir, "graph.json"), "--corpus", &p(dir, "test.ldjson")]),
        0
    );

    assert_eq!(
        cli(&[
            "--out", &out, "pkg", "corrupt", "--graph", &p(dir, "graph.json"),
            "--dropouts", "0.2,0.5", "--seed", "9", "--corpus", &p(dir, "train.ldjson"),
        ]),
        0
    );
    assert!(dir.join("graph-dropout0.2.json").exists());
    let csv = std::fs::read_to_string(dir.join("corrupt.csv")).unwrap();
    assert!(csv.starts_with("dropout,edges,coverage"));
    assert_eq!(csv.lines().count(), 3);

    assert_eq!(
        cli(&[
            "--out", &out, "train", "--data", &p(dir, "train.ldjson"),
            "--world", &p(dir, "world.json"), "--graph", &p(dir, "graph.json"),
            "--seeds", "0,1", "--epochs", "6", "--hidden-dim", "16",
        ]),
        0
    );
    assert!(dir.join("ckpt-seed0.json").exists() && dir.join("ckpt-seed1.json").exists());
    let log = std::fs::read_to_string(dir.join("train-log-seed0.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,plan_loss,task_loss,align_loss,train_sr"));
    assert_eq!(log.lines().count(), 7);

    // The base variant trains under the same flag surface.
    assert_eq!(
        cli(&[
            "--out", &out, "train", "--data", &p(dir, "train.ldjson"),
            "--world", &p(dir, "world.json"), "--graph", &p(dir, "graph.json"),
            "--seeds", "7", "--epochs", "6", "--hidden-dim", "16", "--train-dvl", "off",
        ]),
        0
    );

    assert_eq!(
        cli(&[
            "--out", &out, "eval", "--data", &p(dir, "test.ldjson"),
            "--graph", &p(dir, "graph.json"),
            "--ckpt", &format!("{},{}", p(dir, "ckpt-seed0.json"), p(dir, "ckpt-seed1.json")),
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("eval_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);

    assert_eq!(
        cli(&[
            "--out", &out, "decode", "--data", &p(dir, "test.ldjson"),
            "--graph", &p(dir, "graph.json"), "--ckpt", &p(dir, "ckpt-seed0.json"),
            "--limit", "4",
        ]),
        0
    );
    let decoded = std::fs::read_to_string(dir.join("decoded.ldjson")).unwrap();
    assert_eq!(decoded.trim().lines().count(), 4);
}

#[test]
fn synth_is_deterministic_per_seed() {
    // Repeating the exact invocation rewrites every artifact bit-identically.
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        assert_eq!(
            cli(&[
                "--out", &dir.to_string_lossy(), "synth", "--n-actions", "6", "--n-tasks", "2",
                "--embed-dim", "8", "--n-train", "12", "--n-test", "6", "--seed", "11",
            ]),
            0
        );
        snapshots.push(
            ["world.json", "train.ldjson", "test.ldjson"]
                .map(|name| std::fs::read(dir.join(name)).unwrap()),
        );
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn config_file_env_and_flags_layer_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"n_actions": 6, "n_tasks": 2, "embed_dim": 8, "n_train": 12, "n_test": 6, "sigma": 0.9}"#,
    )
    .unwrap();

    // Flag overrides the file's sigma; file supplies the rest.
    assert_eq!(
        cli(&[
            "--config", &p(dir, "cfg.json"), "--out", &dir.to_string_lossy(),
            "synth", "--sigma", "0.2",
        ]),
        0
    );
    let world: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("world.json")).unwrap()).unwrap();
    assert_eq!(world["run_config"]["params"]["n_actions"], 6);
    assert_eq!(world["run_config"]["params"]["sigma"], 0.2);

    // Unknown config keys are a hard error, not a silent default.
    std::fs::write(dir.join("bad.json"), r#"{"n_action": 6}"#).unwrap();
    assert_eq!(
        cli(&["--config", &p(dir, "bad.json"), "--out", &dir.to_string_lossy(), "synth"]),
        2
    );
}

#[test]
fn exit_codes_distinguish_usage_data_and_numerical_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_string_lossy().into_owned();

    // Unknown flag: usage error.
    assert_eq!(cli(&["--out", &out, "synth", "--no-such-flag"]), 1);
    // Unknown inference mode: usage error.
    assert_eq!(
        cli(&["--out", &out, "decode", "--data", "x", "--graph", "x", "--ckpt", "x", "--mode", "nope"]),
        1
    );
    // Missing input file: data error.
    assert_eq!(cli(&["--out", &out, "pkg", "build", "--corpus", "/no/such/file"]), 2);
    // Help is not an error.
    assert_eq!(cli(&["--help"]), 0);
}
