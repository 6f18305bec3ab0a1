//! End-to-end checks of the command-line interface: exit codes, output
//! idempotency, and file-format round trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_koopgraph")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn koopgraph")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// Recursively collect (relative path, bytes) for every file under a dir.
fn snapshot_dir(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, acc: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> =
            std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, acc);
            } else {
                acc.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    let mut acc = Vec::new();
    walk(root, root, &mut acc);
    acc
}

#[test]
fn gen_synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = run(&[
            "gen-synth",
            "--task",
            "nodeclass",
            "--n",
            "60",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(snapshot_dir(&a), snapshot_dir(&b));
}

#[test]
fn gen_synth_two_cliques_edge_count() {
    // p_in = 1, p_out = 0 with two equal blocks of 50: exactly 2 * C(50,2)
    // intra-block edge lines
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cliques");
    let res = run(&[
        "gen-synth",
        "--task",
        "nodeclass",
        "--n",
        "100",
        "--p-in",
        "1.0",
        "--p-out",
        "0.0",
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(code(&res), 0);
    let edges = std::fs::read_to_string(out.join("edges.tsv")).unwrap();
    let lines = edges.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).count();
    assert_eq!(lines, 2 * (50 * 49 / 2));
}

#[test]
fn train_pipeline_round_trips_generated_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let res = run(&[
        "gen-synth", "--task", "nodeclass", "--n", "60", "--out",
        data.to_str().unwrap(), "--seed", "5",
    ]);
    assert_eq!(code(&res), 0);
    // shrink epochs so this smoke test stays fast
    let cfg_path = data.join("config.json");
    let cfg = std::fs::read_to_string(&cfg_path).unwrap().replace("\"epochs\": 200", "\"epochs\": 3");
    std::fs::write(&cfg_path, cfg).unwrap();
    let run_dir = dir.path().join("run");
    let res = run(&[
        "train", "--task", "nodeclass", "--config",
        cfg_path.to_str().unwrap(), "--out", run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("test_accuracy="), "stdout: {stdout}");

    // JSONL: one record per epoch plus one summary, all parseable
    let jsonl = std::fs::read_to_string(run_dir.join("metrics.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 3 + 1);
    for line in &lines[..3] {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("train_loss").is_some());
    }
    let summary: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    assert!(summary.get("test_metric").is_some());
    assert!(run_dir.join("checkpoint/model.json").exists());
    assert!(run_dir.join("summary.json").exists());
}

#[test]
fn train_outputs_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&run(&[
            "gen-synth", "--task", "stg", "--n", "10", "--t-len", "50", "--out",
            data.to_str().unwrap(), "--seed", "2",
        ])),
        0
    );
    let cfg_path = data.join("config.json");
    let cfg = std::fs::read_to_string(&cfg_path).unwrap().replace("\"epochs\": 60", "\"epochs\": 4");
    std::fs::write(&cfg_path, cfg).unwrap();
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for out in [&r1, &r2] {
        let res = run(&[
            "train", "--task", "stg", "--config", cfg_path.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--quiet",
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(snapshot_dir(&r1), snapshot_dir(&r2));
}

#[test]
fn dmd_fit_writes_bundle_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&run(&[
            "gen-synth", "--task", "nodeclass", "--n", "40", "--out",
            data.to_str().unwrap(), "--seed", "9",
        ])),
        0
    );
    let cfg = data.join("config.json");
    let (b1, b2) = (dir.path().join("b1"), dir.path().join("b2"));
    for out in [&b1, &b2] {
        let res = run(&[
            "dmd-fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        assert!(out.join("manifest.json").exists());
        assert!(out.join("psi.kgrf").exists());
        assert!(out.join("k_reduced.kgrf").exists());
    }
    assert_eq!(snapshot_dir(&b1), snapshot_dir(&b2));
    let res = run(&["dmd-fit", "--config", cfg.to_str().unwrap(), "--out", b1.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("rank:"), "stdout: {stdout}");
    assert!(stdout.contains("eigenvalues"), "stdout: {stdout}");
}

#[test]
fn missing_files_and_bad_flags_exit_2() {
    // missing config file
    let res = run(&["dmd-fit", "--config", "/nonexistent/config.json", "--out", "/tmp/x"]);
    assert_eq!(code(&res), 2);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("/nonexistent/config.json"), "stderr: {err}");

    // config referencing a missing features file
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"kind": "nodeclass", "edges": "e.tsv", "features": "missing.csv", "labels": "l.txt", "splits": "s.json"}"#,
    )
    .unwrap();
    std::fs::write(dir.path().join("e.tsv"), "0\t1\n").unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        r#"{"dataset": "manifest.json", "dynamic": {"kind": "gcn", "steps": 1},
            "dmd": {"xi": 0.85}, "model": {"arch": "standard", "hidden_dim": 4},
            "train": {"lr": 0.01, "epochs": 1, "loss": "ce"}, "seed": 1}"#,
    )
    .unwrap();
    let res = run(&[
        "dmd-fit",
        "--config",
        dir.path().join("config.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("missing.csv"), "stderr: {err}");

    // unknown task
    let res = run(&[
        "train", "--task", "nonsense", "--config",
        dir.path().join("config.json").to_str().unwrap(),
        "--out", dir.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 2);

    // schrodinger flag validation
    let res = run(&["demo-schrodinger", "--steps", "0"]);
    assert_eq!(code(&res), 2);
    let res = run(&["demo-schrodinger", "--n", "12", "--steps", "20", "--constraint", "banana"]);
    assert_eq!(code(&res), 2);
}

#[test]
fn schrodinger_demo_prints_report_and_accepts_both_constraints() {
    for constraint in ["orthogonal", "symmetric"] {
        let res = run(&[
            "demo-schrodinger", "--n", "16", "--steps", "40", "--sigma", "3",
            "--constraint", constraint,
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8_lossy(&res.stdout);
        assert!(stdout.contains("truth_norm_drift"));
        assert!(stdout.to_lowercase().contains(constraint));
    }
}

#[test]
fn locked_out_dir_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("locked");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".koopgraph.lock"), b"").unwrap();
    let res = run(&[
        "gen-synth", "--task", "nodeclass", "--n", "30", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 5);

    // lock is released after a successful run
    let out2 = dir.path().join("ok");
    let res = run(&[
        "gen-synth", "--task", "nodeclass", "--n", "30", "--out", out2.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0);
    assert!(!out2.join(".koopgraph.lock").exists());
}

#[test]
fn invalid_thread_env_exits_2() {
    let res = Command::new(bin())
        .args(["demo-schrodinger", "--n", "12", "--steps", "20"])
        .env("KOOPGRAPH_THREADS", "banana")
        .output()
        .unwrap();
    assert_eq!(code(&res), 2);
    let res = Command::new(bin())
        .args(["demo-schrodinger", "--n", "12", "--steps", "20", "--sigma", "3"])
        .env("KOOPGRAPH_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
}

#[test]
fn grad_check_command_passes() {
    let res = run(&["grad-check", "--arch", "both"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("PASS"));
}

#[test]
fn config_round_trip_is_semantically_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(
        code(&run(&[
            "gen-synth", "--task", "nodeclass", "--n", "40", "--out",
            data.to_str().unwrap(), "--seed", "1",
        ])),
        0
    );
    let text = std::fs::read_to_string(data.join("config.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    // reorder keys by shoving them through a BTreeMap-backed Value
    let reordered = serde_json::to_string(&parsed).unwrap();
    let a = koopgraph::config::RunConfig::parse(&text).unwrap();
    let b = koopgraph::config::RunConfig::parse(&reordered).unwrap();
    assert_eq!(a, b);
}
