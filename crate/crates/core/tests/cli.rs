use std::path::Path;
use std::process::{Command, Output};

const TOY: &str = r#"{
    "version": 1,
    "seed": 4,
    "epochs": 3,
    "timing": false,
    "eki": {"batch_size": 5, "ensemble_size": 10},
    "task": {"supervised": {
        "data": {
            "kind": "inline",
            "inputs": [[0.0], [0.1], [0.2], [0.3], [0.4], [0.5], [0.6], [0.7], [0.8], [0.9]],
            "targets": [[-0.5], [-0.3], [-0.1], [0.1], [0.3], [0.5], [0.7], [0.9], [1.1], [1.3]]
        },
        "model": {"input": [1, 1, 1], "layers": [{"kind": "affine_output", "outputs": 1}]}
    }}
}"#;

fn eki(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eki"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_writes_metrics_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let out = eki(&["--config", &cfg, "--out-dir", "run", "train-supervised"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,train_metric,test_metric,wall_time,ensemble_size");
    assert_eq!(lines.len(), 4);
    let params = std::fs::read_to_string(dir.path().join("run/params.txt")).unwrap();
    assert_eq!(params.lines().count(), 2);
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    for name in ["a", "b"] {
        assert!(eki(&["--config", &cfg, "--out-dir", name, "train-supervised"], dir.path()).status.success());
    }
    assert!(eki(&["--config", &cfg, "--seed", "5", "--out-dir", "c", "train-supervised"], dir.path()).status.success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    for (name, threads) in [("one", "1"), ("four", "4")] {
        let out = eki(&["--config", &cfg, "--threads", threads, "--out-dir", name, "train-supervised"], dir.path());
        assert!(out.status.success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("params.txt")).unwrap();
    assert_eq!(read("one"), read("four"));
}

#[test]
fn config_errors_exit_nonzero_with_structured_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TOY.replacen("\"seed\": 4,", "\"seed\": 4, \"sed\": 1,", 1));
    let out = eki(&["--config", &cfg, "train-supervised"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let line: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(line["error"], "config");
    assert!(line["message"].as_str().unwrap().contains("sed"));

    let cfg = write_config(dir.path(), TOY);
    assert!(!eki(&["--config", &cfg, "train-online"], dir.path()).status.success());
    assert!(!eki(&["train-supervised"], dir.path()).status.success());
}

#[test]
fn report_reemits_table_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    assert!(eki(&["--config", &cfg, "--out-dir", "run", "train-supervised"], dir.path()).status.success());
    let out = eki(&["--out-dir", "run", "report"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("run/metrics.csv")).unwrap();
    let b = std::fs::read(dir.path().join("run/report.csv")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("run/train_metric.svg").is_file());
    assert!(dir.path().join("run/test_metric.svg").is_file());
    assert!(!eki(&["--out-dir", "missing", "report"], dir.path()).status.success());
}

#[test]
fn data_dir_env_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("elsewhere");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("s.csv"), "t,v\n0,1\n1,3\n2,2\n3,5\n4,4\n5,6\n").unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"version": 1, "seed": 1, "timing": false, "eki": {"ensemble_size": 4},
            "task": {"online": {"series": {"kind": "file", "path": "s.csv"},
                                "model": {"input_dim": 1, "hidden_dim": 2, "output_dim": 1},
                                "report_every": 2}}}"#,
    );
    assert!(!eki(&["--config", &cfg, "train-online"], dir.path()).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_eki"))
        .args(["--config", &cfg, "--out-dir", "run", "train-online"])
        .current_dir(dir.path())
        .env("EKI_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
