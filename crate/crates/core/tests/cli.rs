use std::path::Path;
use std::process::{Command, Output};

fn ocmot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocmot"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: [&str; 8] = [
    "--set",
    "sim.videos=2",
    "--set",
    "sim.frames=32",
    "--set",
    "train.steps=3",
    "--set",
    "train.batch=2",
];

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&ocmot(d, &[])), 2);
    assert_eq!(code(&ocmot(d, &["fit"])), 2);
    assert_eq!(code(&ocmot(d, &["gen", "--set", "sim.nonsense=1"])), 2);
    assert_eq!(code(&ocmot(d, &["gen", "--set", "sim.videos"])), 2);
    assert_eq!(code(&ocmot(d, &["gen", "--set", "sim.p_miss=3"])), 2);
    assert_eq!(code(&ocmot(d, &["gen", "--config", "absent.json"])), 2);
    std::fs::write(d.join("bad.json"), "{\"sim\": {\"videos\": \"many\"}}").unwrap();
    assert_eq!(code(&ocmot(d, &["gen", "--config", "bad.json"])), 2);
    // inputs that do not exist are usage problems too
    assert_eq!(code(&ocmot(d, &["train"])), 2);
    assert_eq!(code(&ocmot(d, &["eval"])), 2);
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = ocmot(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("track"));
}

#[test]
fn runtime_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["gen", "--out", "no/such/dir/data.ocmot"];
    args.extend(SMALL);
    assert_eq!(code(&ocmot(dir.path(), &args)), 1);
    // a file that exists but is not a dataset
    std::fs::write(dir.path().join("data.ocmot"), b"not a dataset").unwrap();
    let mut args = vec!["train"];
    args.extend(SMALL);
    assert_eq!(code(&ocmot(dir.path(), &args)), 1);
}

#[test]
fn every_subcommand_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for cmd in ["gen", "train", "track", "eval", "viz"] {
        let mut args = vec![cmd, "--seed", "3"];
        args.extend(SMALL);
        let o = ocmot(d, &args);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["data.ocmot", "model.ckpt", "model.ckpt.loss.tsv", "tracks.txt", "report.txt"] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.starts_with("# method ocmot"));
    assert!(d.join("viz/v0000_f0000.png").is_file());

    // continue the run to more steps
    let mut args = vec!["train", "--seed", "3", "--set", "paths.resume=model.ckpt", "--out", "more.ckpt"];
    args.extend(SMALL);
    args.extend(["--set", "train.steps=5"]);
    let o = ocmot(d, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("step 5"));

    // the baseline needs no checkpoint
    let mut args = vec!["track", "--set", "track.method=iou_baseline", "--out", "base.txt"];
    args.extend(SMALL);
    assert_eq!(code(&ocmot(d, &args)), 0);
}
