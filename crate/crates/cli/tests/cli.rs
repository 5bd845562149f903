use std::path::Path;
use std::process::{Command, Output};

fn tonefair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonefair"))
        .args(args)
        .output()
        .expect("binary runs")
}

const TINY: &[&str] = &[
    "--set",
    "data.synth.n_classes=3",
    "--set",
    "data.synth.counts=[8,8,8,8,8,8]",
    "--set",
    "data.synth.side=16",
    "--set",
    "train.epochs=2",
    "--set",
    "train.lr=0.01",
];

fn with_tiny<'a>(head: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(TINY);
    v.extend_from_slice(extra);
    v
}

/// 1000 predictions per group, the first `round(acc * 1000)` of them correct.
fn write_predictions(path: &Path, accs: &[f64]) {
    let mut s = String::from("id,true,pred,tone\n");
    for (g, a) in accs.iter().enumerate() {
        let correct = (a * 1000.0).round() as usize;
        for i in 0..1000 {
            let truth = i % 5;
            let pred = if i < correct { truth } else { (truth + 1) % 5 };
            s.push_str(&format!("g{g}-{i},{truth},{pred},{g}\n"));
        }
    }
    std::fs::write(path, s).unwrap();
}

fn nar_of(out: &Output) -> f64 {
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["nar"].as_f64().unwrap()
}

#[test]
fn audit_reproduces_published_baseline_range() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("preds.csv");
    write_predictions(&p, &[0.158, 0.169, 0.222, 0.241, 0.289, 0.155]);
    let out = tonefair(&["audit", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((nar_of(&out) - 0.652).abs() <= 5e-4, "{}", nar_of(&out));
    let again = tonefair(&["audit", p.to_str().unwrap()]);
    assert_eq!(out.stdout, again.stdout);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["overall_acc", "acc_by_group", "macro_recall", "macro_f1", "eod", "counts_by_group", "tpr_definition"] {
        assert!(text.contains(&format!("\"{key}\"")), "{key}");
    }
}

#[test]
fn audit_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("preds.csv");
    std::fs::write(&p, "id,true,pred,tone\na,0,0,6\n").unwrap();
    assert_eq!(tonefair(&["audit", p.to_str().unwrap()]).status.code(), Some(1));
    let missing = dir.path().join("none.csv");
    assert_eq!(tonefair(&["audit", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn missing_config_exits_one_naming_path() {
    let out = tonefair(&["train", "--config", "/nowhere/exp.toml", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nowhere/exp.toml"));
}

#[test]
fn unknown_override_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = tonefair(&["split", "--set", "split.tran=0.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split.tran"));
    assert_eq!(tonefair(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tonefair(&["--help"]).status.code(), Some(0));
}

#[test]
fn divergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let args = with_tiny(&["train", "--out", dir.path().to_str().unwrap()], &["--set", "train.lr=1e30"]);
    let out = tonefair(&args);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

fn train_ckpt(dir: &Path, name: &str, extra: &[&str]) -> Vec<u8> {
    let out_dir = dir.join(name);
    let args = with_tiny(&["train", "--out", out_dir.to_str().unwrap()], extra);
    let out = tonefair(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.toml", "history.csv", "predictions.csv", "metrics.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    std::fs::read(out_dir.join("model.ckpt")).unwrap()
}

#[test]
fn use_reg_switch_matters_only_when_lambda_positive() {
    let dir = tempfile::tempdir().unwrap();
    let reg = train_ckpt(dir.path(), "reg", &[]);
    let noreg = train_ckpt(dir.path(), "noreg", &["--set", "train.use_reg=false"]);
    assert_ne!(reg, noreg);
    let zero = train_ckpt(dir.path(), "zero", &["--set", "train.lambda=0.0"]);
    assert_eq!(zero, noreg);

    let snap = dir.path().join("noreg/config.toml");
    let replay = dir.path().join("replay");
    let out = tonefair(&["train", "--config", snap.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(replay.join("model.ckpt")).unwrap(), noreg);
}

#[test]
fn eval_reproduces_train_predictions() {
    let dir = tempfile::tempdir().unwrap();
    train_ckpt(dir.path(), "run", &[]);
    let run = dir.path().join("run");
    let ev = dir.path().join("eval");
    let out = tonefair(&[
        "eval",
        "--config",
        run.join("config.toml").to_str().unwrap(),
        "--checkpoint",
        run.join("model.ckpt").to_str().unwrap(),
        "--out",
        ev.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(run.join("predictions.csv")).unwrap(),
        std::fs::read(ev.join("predictions.csv")).unwrap()
    );
}

#[test]
fn synth_then_train_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = tonefair(&with_tiny(&["synth", "--out", data.to_str().unwrap()], &[]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = data.join("manifest.csv");
    assert!(manifest.exists());

    let split_dir = dir.path().join("split");
    let m = format!("data.manifest=\"{}\"", manifest.display());
    let out = tonefair(&with_tiny(
        &["split", "--out", split_dir.to_str().unwrap()],
        &["--set", "data.source=manifest", "--set", &m, "--set", "data.side=16"],
    ));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let split = std::fs::read_to_string(split_dir.join("split.csv")).unwrap();
    assert_eq!(split.lines().count(), 1 + 48);
}

#[test]
fn experiment_refuses_rerun_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let out_s = dir.path().to_str().unwrap();
    let args = with_tiny(
        &["experiment", "--out", out_s],
        &["--set", "experiment.seeds=[3]", "--set", "experiment.id=t1", "--set", "train.epochs=1"],
    );
    let first = tonefair(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let report = dir.path().join("t1/report.csv");
    let before = std::fs::read(&report).unwrap();

    let second = tonefair(&args);
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&second.stderr).contains("report.csv"));

    let mut forced = args.clone();
    forced.push("--force");
    assert_eq!(tonefair(&forced).status.code(), Some(0));
    assert_eq!(std::fs::read(&report).unwrap(), before);
}
