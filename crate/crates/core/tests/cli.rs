use std::path::Path;
use std::process::{Command, Output};

fn xfode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xfode")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_flags_exit_with_one() {
    assert_eq!(xfode(&["train"]).status.code(), Some(1));
    assert_eq!(xfode(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(xfode(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_train_simulate_export() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("damper.csv");
    let model = dir.path().join("model.json");
    let pred = dir.path().join("pred.csv");
    let mfs = dir.path().join("mfs");

    let out = xfode(&["gen-data", "--kind", "damper_like", "--n", "300", "--seed", "1", "--out", path(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 301);

    let out = xfode(&[
        "train", "--data", path(&data), "--model", "xfode", "--ps", "3", "--sr", "2", "--m", "2", "--rules", "3",
        "--rollout", "5", "--stride", "5", "--epochs", "2", "--out", path(&model),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["model_kind"], "xfode");
    assert_eq!(json["m"], 2);

    let out = xfode(&["simulate", "--model", path(&model), "--data", path(&data), "--out", path(&pred)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&pred).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,y_true_1,y_pred_1"));
    assert_eq!(lines.next().unwrap().split(',').next(), Some("2"));
    assert_eq!(text.lines().count(), 1 + 300 - 2);

    let out = xfode(&["simulate", "--model", path(&model), "--data", path(&data)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);

    let out = xfode(&["export-mfs", "--model", path(&model), "--out-dir", path(&mfs)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 1..=4 {
        assert_eq!(std::fs::read_to_string(mfs.join(format!("mf_z{i}.csv"))).unwrap().lines().count(), 502);
    }
    assert!(mfs.join("manifest.csv").exists());
}

#[test]
fn benchmark_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    let report = dir.path().join("report.json");
    std::fs::write(
        &cfg,
        "synthetic = \"tank_like\"\nsamples = 400\nmodel = \"afode\"\nm = 1\nrules = 3\nrollout = 5\nstride = 5\nseeds = [0, 1]\n",
    )
    .unwrap();
    let out = xfode(&["benchmark", "--config", path(&cfg), "--epochs", "2", "--seeds", "4", "--json", path(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["seeds"].as_array().unwrap().len(), 1);
    assert_eq!(json["seeds"][0]["seed"], 4);
    assert_eq!(json["single_seed"], true);
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = xfode(&["simulate", "--model", path(&missing), "--data", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "epochs = \"many\"\n").unwrap();
    assert_eq!(xfode(&["benchmark", "--config", path(&cfg)]).status.code(), Some(1));
}
