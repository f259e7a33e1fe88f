//! Black-box tests of the `mosa-bench` binary: command plumbing, file
//! outputs, and exit codes. Uses a deliberately small experiment so the
//! whole file runs in seconds.

use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mosa-bench"))
        .args(args)
        .output()
        .expect("spawn mosa-bench")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out_dir = dir.join("run");
    let cfg = format!(
        "scenario = agent_shift\n\
         seed = 3\n\
         out_dir = {}\n\
         data.source_train = 40\n\
         data.source_val = 10\n\
         data.source_test = 10\n\
         data.target_adapt = 30\n\
         data.target_val = 8\n\
         data.target_test = 10\n\
         model.d_model = 8\n\
         model.t_obs = 4\n\
         model.t_pred = 3\n\
         model.k_modes = 2\n\
         pretrain.max_epochs = 2\n\
         pretrain.patience = 2\n\
         adapt.methods = mosa\n\
         adapt.masks = A\n\
         adapt.ranks = 1\n\
         adapt.n_targets = 4\n\
         adapt.seeds = 1, 2\n\
         adapt.batch_size = 2\n\
         adapt.max_epochs = 2\n\
         adapt.patience = 2\n",
        out_dir.display()
    );
    let path = dir.join("bench.cfg");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn full_command_chain_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = dir.path().join("run");

    let out = bench(&["generate", "--config", cfg]);
    assert!(out.status.success(), "generate failed: {}", stderr(&out));
    assert!(stdout(&out).contains("source_train.json"));
    for f in [
        "scenes.json",
        "source_train.json",
        "source_val.json",
        "source_test.json",
        "target_adapt.json",
        "target_val.json",
        "target_test.json",
    ] {
        assert!(run.join(f).exists(), "missing {f} after generate");
    }

    let out = bench(&["pretrain", "--config", cfg]);
    assert!(out.status.success(), "pretrain failed: {}", stderr(&out));
    assert!(run.join("checkpoint.json").exists());
    assert!(run.join("pretrain_curve.csv").exists());

    let out = bench(&["adapt", "--config", cfg, "--jobs", "2"]);
    assert!(out.status.success(), "adapt failed: {}", stderr(&out));
    let results = std::fs::read_to_string(run.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2, "header plus one row per seed");

    let checkpoint = run.join("checkpoint.json");
    let data = run.join("target_test.json");
    let eval_csv = run.join("eval.csv");
    let out = bench(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "eval failed: {}", stderr(&out));
    assert!(stdout(&out).contains("Top-K FDE"));
    assert!(eval_csv.exists());

    let results_path = run.join("results.csv");
    let out = bench(&["report", "--results", results_path.to_str().unwrap()]);
    assert!(out.status.success(), "report failed: {}", stderr(&out));
    let report = std::fs::read_to_string(run.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 1, "two seeds aggregate to one row");
}

#[test]
fn seed_override_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let train = dir.path().join("run/source_train.json");

    assert!(bench(&["generate", "--config", cfg]).status.success());
    let first = std::fs::read(&train).unwrap();
    assert!(bench(&["generate", "--config", cfg]).status.success());
    assert_eq!(first, std::fs::read(&train).unwrap(), "same seed must reproduce bytes");

    let out = bench(&["generate", "--config", cfg, "--seed-override", "4"]);
    assert!(out.status.success());
    assert_ne!(first, std::fs::read(&train).unwrap(), "new seed must change the data");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "scenario = agent_shift\nno_such_key = 1\n").unwrap();
    let out = bench(&["generate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config error"), "stderr: {}", stderr(&out));

    // Unknown CLI flags are also usage errors.
    let out = bench(&["generate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let out = bench(&[
        "eval",
        "--checkpoint",
        "/no/such/checkpoint.json",
        "--data",
        "/no/such/data.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"), "stderr: {}", stderr(&out));
}
