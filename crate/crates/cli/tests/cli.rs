use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_iqn-rnn"));
    c.env_remove("IQN_RNN_OUT_DIR").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TINY_MODEL: &[&str] = &[
    "--hidden-size",
    "8",
    "--num-layers",
    "1",
    "--n-cos",
    "8",
    "--epochs",
    "1",
    "--batches-per-epoch",
    "3",
    "--batch-size",
    "8",
    "--num-parallel-samples",
    "12",
];

fn tiny_gmm_train(out: &Path) -> Output {
    let mut args = vec![
        "train",
        "--synth-gmm",
        "--gmm-series",
        "40",
        "--gmm-length",
        "16",
        "--context",
        "4",
        "--pred",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_MODEL);
    run(&args)
}

/// Hourly positive series with a daily cycle.
fn write_hourly(dir: &Path, series: usize, len: usize) -> PathBuf {
    let path = dir.join("load.jsonl");
    let mut text = String::new();
    for i in 0..series {
        let target: Vec<String> = (0..len)
            .map(|t| {
                format!(
                    "{:.3}",
                    10.0 + i as f64
                        + 5.0 * ((t % 24) as f64 / 24.0 * std::f64::consts::TAU).sin()
                        + (t % 7) as f64 * 0.3
                )
            })
            .collect();
        text.push_str(&format!(
            "{{\"item_id\": \"m{i}\", \"start\": \"2014-01-01 00:00:00\", \"target\": [{}]}}\n",
            target.join(",")
        ));
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn gradcheck_passes_for_two_seeds() {
    for seed in ["7", "21"] {
        let stdout = ok(&run(&["gradcheck", "--seed", seed]));
        assert!(stdout.contains("gradcheck: pass"), "{stdout}");
        assert!(stdout.contains("max_rel_error="));
    }
}

#[test]
fn train_evaluate_forecast_round_trip() {
    let dir = TempDir::new().unwrap();
    let run_dir = dir.path().join("run");
    ok(&tiny_gmm_train(&run_dir));
    for f in ["model.ckpt", "loss_trace.csv", "train_config.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let cfg = json(&run_dir.join("train_config.json"));
    assert_eq!(cfg["model"]["context_length"], 4);
    assert_eq!(cfg["model"]["hidden_size"], 8);
    assert_eq!(cfg["data"]["source"], "synth_gmm");
    assert_eq!(
        fs::read_to_string(run_dir.join("loss_trace.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let stdout = ok(&run(&["evaluate", "--out-dir", run_dir.to_str().unwrap()]));
    for key in ["crps=", "msis=", "smape=", "mase=", "ql50=", "ql90=", "nrmse="] {
        assert!(stdout.contains(key), "{key} missing from {stdout}");
    }
    let text = fs::read_to_string(run_dir.join("metrics.txt")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("crps=")));
    assert!(json(&run_dir.join("metrics.json"))["mase"].is_number());
    assert_eq!(
        fs::read_to_string(run_dir.join("per_series.csv"))
            .unwrap()
            .lines()
            .count(),
        41
    );

    let qf = fs::read_to_string(run_dir.join("quantile_function.csv")).unwrap();
    let rows: Vec<Vec<f64>> = qf
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 99);
    assert!(rows.windows(2).all(|w| w[0][1] <= w[1][1] && w[0][2] <= w[1][2]));

    ok(&run(&[
        "forecast",
        "--out-dir",
        run_dir.to_str().unwrap(),
        "--num-samples",
        "5",
    ]));
    let fc = fs::read_to_string(run_dir.join("forecasts.csv")).unwrap();
    assert_eq!(fc.lines().count(), 1 + 40 * 5 * 2);
    assert!(fc.starts_with("series_id,sample,step,timestamp,value"));
}

#[test]
fn rerunning_the_echoed_config_reproduces_the_checkpoint() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    ok(&tiny_gmm_train(&first));
    let cfg = first.join("train_config.json");
    ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read(first.join("model.ckpt")).unwrap(),
        fs::read(second.join("model.ckpt")).unwrap()
    );
    assert_eq!(json(&cfg), json(&second.join("train_config.json")));
}

#[test]
fn file_defaults_follow_the_standard_hyperparameters() {
    let dir = TempDir::new().unwrap();
    let data = write_hourly(dir.path(), 3, 400);
    let out = dir.path().join("run");
    ok(&run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--dry-run",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let cfg = json(&out.join("train_config.json"));
    let m = &cfg["model"];
    assert_eq!(m["hidden_size"], 64);
    assert_eq!(m["num_layers"], 3);
    assert_eq!(m["dropout"], 0.2);
    assert_eq!(m["epochs"], 10);
    assert_eq!(m["learning_rate"], 0.001);
    assert_eq!(m["batch_size"], 256);
    assert_eq!(m["batches_per_epoch"], 120);
    assert_eq!(m["num_parallel_samples"], 100);
    assert_eq!(m["prediction_length"], 24);
    assert_eq!(m["context_length"], 48);
    assert_eq!(m["freq"], "hourly");
    assert_eq!(m["domain"], "positive");
    assert_eq!(cfg["windows"], 7);
    assert!(!out.join("model.ckpt").exists());
}

#[test]
fn missing_data_fails_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let res = run(&[
        "train",
        "--data",
        "/no/such/file.jsonl",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let res = run(&[
        "train",
        "--synth-gmm",
        "--dropout",
        "1.5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(
        run(&["train", "--out-dir", out.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn checkpoint_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let run_dir = dir.path().join("run");
    ok(&tiny_gmm_train(&run_dir));
    let res = run(&[
        "evaluate",
        "--out-dir",
        run_dir.to_str().unwrap(),
        "--hidden-size",
        "32",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("hidden-size"));
    let res = run(&[
        "evaluate",
        "--out-dir",
        run_dir.to_str().unwrap(),
        "--domain",
        "positive",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!run_dir.join("metrics.txt").exists());
}

#[test]
fn clairvoyant_baseline_scores_zero() {
    let dir = TempDir::new().unwrap();
    let data = write_hourly(dir.path(), 4, 24 * 12);
    let out = dir.path().join("oracle");
    ok(&run(&[
        "evaluate",
        "--baseline",
        "clairvoyant",
        "--data",
        data.to_str().unwrap(),
        "--windows",
        "2",
        "--num-samples",
        "4",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    let m = json(&out.join("metrics.json"));
    for key in ["crps", "ql50", "ql90", "msis", "nrmse", "smape", "mase"] {
        assert_eq!(m[key].as_f64(), Some(0.0), "{key}");
    }
    assert_eq!(m["num_items"], 8);

    let naive = dir.path().join("naive");
    ok(&run(&[
        "evaluate",
        "--baseline",
        "seasonal-naive",
        "--data",
        data.to_str().unwrap(),
        "--windows",
        "2",
        "--out-dir",
        naive.to_str().unwrap(),
    ]));
    assert!(json(&naive.join("metrics.json"))["crps"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_writes_a_loadable_dataset() {
    let dir = TempDir::new().unwrap();
    ok(&bin()
        .args(["synth", "--gmm-series", "5", "--gmm-length", "12", "--gmm-seed", "3"])
        .env("IQN_RNN_OUT_DIR", dir.path())
        .output()
        .unwrap());
    let text = fs::read_to_string(dir.path().join("gmm.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["target"].as_array().unwrap().len(), 12);
    assert_eq!(json(&dir.path().join("synth_config.json"))["seed"], 3);
}
