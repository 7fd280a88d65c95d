//! Command-line behavior: exit codes, staging, manifests and replay.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trajclass::cli::{Manifest, RunConfig, DEFAULT_CONFIG};
use trajclass::data::{histogram, PreparedDataset};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajclass")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spec(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("spec.toml");
    fs::write(&p, body).unwrap();
    p
}

const SMALL: &str = "seed = 4\nlength = 12\n[counts]\nUSD = 20\nSA = 20\nS = 20\n";

#[test]
fn gen_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let sp = spec(d.path(), SMALL);
    ok(&["gen", s(&sp), "--out", s(&d.path().join("a"))]);
    ok(&["gen", s(&sp), "--out", s(&d.path().join("b"))]);
    let a = fs::read(d.path().join("a/trajectories.csv")).unwrap();
    let b = fs::read(d.path().join("b/trajectories.csv")).unwrap();
    assert_eq!(a, b);
    ok(&["gen", s(&sp), "--seed", "5", "--out", s(&d.path().join("c"))]);
    assert_ne!(a, fs::read(d.path().join("c/trajectories.csv")).unwrap());
}

#[test]
fn unknown_class_leaves_no_output() {
    let d = tempfile::tempdir().unwrap();
    let sp = spec(d.path(), "[counts]\nXYZ = 3\n");
    let out = d.path().join("o");
    assert_eq!(run(&["gen", s(&sp), "--out", s(&out)]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn non_empty_output_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let sp = spec(d.path(), SMALL);
    let out = d.path().join("o");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    assert_eq!(run(&["gen", s(&sp), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn seven_point_trajectory_gives_three_windows() {
    let d = tempfile::tempdir().unwrap();
    let mut csv = String::from("agent_id,kind,frame,x,y,z,d,label\n");
    for f in 0..7 {
        csv.push_str(&format!("a,vehicle,{f},{f}.0,0,0,0,K\n"));
    }
    for f in 0..6 {
        csv.push_str(&format!("b,vehicle,{f},{f}.0,0,0,0,K\n"));
    }
    fs::write(d.path().join("trajectories.csv"), csv).unwrap();
    fs::write(d.path().join("labels.csv"), "class_index,class_name\n0,K\n").unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "[prep]\nmin_class_count = 1\ntrain_ratio = 0.5\nresample = \"none\"\n").unwrap();
    let out = d.path().join("p");
    ok(&["prep", s(&d.path().join("trajectories.csv")), "--config", s(&cfg), "--out", s(&out)]);
    let ds = PreparedDataset::load(&out.join("dataset.trjd")).unwrap();
    assert_eq!(ds.split.train.len() + ds.split.test.len(), 3);
}

#[test]
fn prep_with_ros_balances_training_set() {
    let d = tempfile::tempdir().unwrap();
    let sp = spec(d.path(), "seed = 2\nlength = 12\n[counts]\nUSD = 30\nSA = 18\n");
    ok(&["gen", s(&sp), "--out", s(&d.path().join("g"))]);
    let out = d.path().join("p");
    ok(&["prep", s(&d.path().join("g/trajectories.csv")), "--resample", "ros", "--out", s(&out)]);
    let ds = PreparedDataset::load(&out.join("dataset.trjd")).unwrap();
    let h = histogram(&ds.training_samples().unwrap(), ds.num_classes()).unwrap();
    assert!(h.iter().all(|&n| n == h[0]), "{h:?}");
    let stages = fs::read_to_string(out.join("stages.txt")).unwrap();
    assert!(stages.contains("train after ros"));
}

fn prepared(d: &Path) -> std::path::PathBuf {
    let sp = spec(d, SMALL);
    ok(&["gen", s(&sp), "--out", s(&d.join("g"))]);
    ok(&["prep", s(&d.join("g/trajectories.csv")), "--out", s(&d.join("p"))]);
    d.join("p/dataset.trjd")
}

#[test]
fn unknown_model_is_usage_error() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    let out = d.path().join("t");
    assert_eq!(run(&["train", s(&ds), "--model", "svm", "--out", s(&out)]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn hmm_train_eval_table_and_replay() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    let t = d.path().join("t");
    ok(&["train", s(&ds), "--model", "hmm", "--out", s(&t)]);
    let m: Manifest = serde_json::from_slice(&fs::read(t.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<String> = m.outputs.iter().map(|o| o.path.display().to_string()).collect();
    assert_eq!(names, ["model.ckpt", "train_log.csv", "train.json"]);
    assert!(m.outputs[1].volatile);
    assert!(!t.join(".staging").exists());

    let clf = trajclass::checkpoint::load(&t.join("model.ckpt")).unwrap();
    match clf {
        trajclass::train::Classifier::Hmm(h) => assert_eq!(h.num_classes(), 3),
        _ => panic!("expected an HMM checkpoint"),
    }

    let e = d.path().join("e");
    ok(&["eval", s(&t.join("model.ckpt")), s(&ds), "--out", s(&e)]);
    for f in ["metrics.txt", "per_class.csv", "confusion.svg", "per_class.svg", "report.json"] {
        assert!(e.join(f).exists(), "{f}");
    }
    let tb = d.path().join("tb");
    ok(&["table", s(&e), "--out", s(&tb)]);
    let table = fs::read_to_string(tb.join("comparison.txt")).unwrap();
    assert!(table.lines().nth(2).unwrap().starts_with("HMM"));

    ok(&["replay", s(&t.join("manifest.json")), "--out", s(&d.path().join("r"))]);
    assert_eq!(fs::read(t.join("model.ckpt")).unwrap(), fs::read(d.path().join("r/model.ckpt")).unwrap());
}

#[test]
fn replay_detects_changed_input() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    let e = d.path().join("t");
    ok(&["train", s(&ds), "--model", "hmm", "--out", s(&e)]);
    let mut bytes = fs::read(&ds).unwrap();
    bytes.push(0);
    fs::write(&ds, bytes).unwrap();
    assert_eq!(run(&["replay", s(&e.join("manifest.json")), "--out", s(&d.path().join("r"))]).status.code(), Some(3));
}

#[test]
fn eval_on_other_classes_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    ok(&["train", s(&ds), "--model", "hmm", "--out", s(&d.path().join("t"))]);
    let other = d.path().join("other");
    fs::create_dir(&other).unwrap();
    let sp = spec(&other, "seed = 4\nlength = 12\n[counts]\nUSD = 20\nSD = 20\n");
    ok(&["gen", s(&sp), "--out", s(&other.join("g"))]);
    ok(&["prep", s(&other.join("g/trajectories.csv")), "--out", s(&other.join("p"))]);
    let out = run(&[
        "eval",
        s(&d.path().join("t/model.ckpt")),
        s(&other.join("p/dataset.trjd")),
        "--out",
        s(&d.path().join("e")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!d.path().join("e").exists());
}

#[test]
fn defaults_print_parseable_config() {
    let out = run(&["defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, DEFAULT_CONFIG);
    assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), RunConfig::default());
    for key in ["stride", "precision", "standardize", "max_iters", "tol", "var_floor", "seeds"] {
        let line = text.lines().find(|l| l.trim_start().starts_with(key)).unwrap();
        assert!(line.contains("# paper-silent"), "{line}");
    }
}

#[test]
fn gradcheck_passes() {
    let out = run(&["gradcheck"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}
