//! Drives the `isomax` binary end to end on a tiny blob config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn isomax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isomax"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "# tiny run\n\
         dataset = blobs\n\
         num_classes = 3\n\
         samples_per_class = 40\n\
         ring_radius = 12, 20\n\
         hidden = 8\n\
         feature_dim = 4\n\
         epochs = 3\n\
         decay_epochs = 2\n\
         batch_size = 16\n\
         seed = 3\n\
         output_dir = {}\n\
         {extra}",
        dir.join("runs").display()
    );
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn train_then_eval_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "head = isomax\nentropic_scale = 10\n");
    let cfg = cfg.to_str().unwrap();

    let out = isomax(&["train", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = dir.path().join("runs").join("isomax-es10-s3");
    let ckpt = run_dir.join("model.ckpt");
    assert!(ckpt.is_file());
    assert_eq!(rows(&run_dir.join("metrics.csv")), 4);
    assert_eq!(rows(&run_dir.join("curves.csv")), 3);

    let out = isomax(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg,
        "--score",
        "mps",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "score,out_data,test_accuracy,mean_entropy,tnr_at_tpr95,auroc,dtacc"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("mps,ring12,"));
    assert!(lines[2].starts_with("mps,ring20,"));

    let runs = dir.path().join("runs");
    let out = isomax(&["report", "--runs", runs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(rows(&runs.join("metrics.csv")), 4);
}

#[test]
fn eval_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "head = softmax\n");
    let cfg = cfg.to_str().unwrap();
    assert!(isomax(&["train", "--config", cfg]).status.success());
    let ckpt = dir.path().join("runs/softmax-s3/model.ckpt");
    let args = [
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        cfg,
        "--score",
        "entropic",
    ];
    let (a, b) = (isomax(&args), isomax(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = isomax(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--scales",
        "1,3,10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(rows(&dir.path().join("runs/sweep.csv")), 4);
    assert_eq!(
        stdout(&out)
            .lines()
            .filter(|l| l.contains("test accuracy"))
            .count(),
        4
    );
}

fn assert_one_line_failure(out: &Output, needle: &str) {
    assert!(!out.status.success());
    let err = stderr(out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains(needle), "{err}");
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "learning_rte = 0.1\n");
    let out = isomax(&["train", "--config", cfg.to_str().unwrap()]);
    assert_one_line_failure(&out, "learning_rte");
}

#[test]
fn missing_files_fail() {
    let out = isomax(&["train", "--config", "/nonexistent/run.cfg"]);
    assert_one_line_failure(&out, "/nonexistent/run.cfg");

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = isomax(&[
        "eval",
        "--checkpoint",
        "/nonexistent/model.ckpt",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_one_line_failure(&out, "model.ckpt");

    let out = isomax(&["report", "--runs", dir.path().to_str().unwrap()]);
    assert_one_line_failure(&out, "error:");
}

#[test]
fn sweep_rejects_softmax_base() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "head = softmax\n");
    let out = isomax(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_one_line_failure(&out, "isomax");
}

#[test]
fn bad_score_is_rejected() {
    let out = isomax(&[
        "eval",
        "--checkpoint",
        "a",
        "--config",
        "b",
        "--score",
        "energy",
    ]);
    assert!(!out.status.success());
}
