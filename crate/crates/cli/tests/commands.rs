use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gwhp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwhp"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = gwhp(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|e| e == "gwhp" || e == "json")
                && !p.ends_with("manifest.json")
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn train_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join("train.json");
    let cfg = json!({
        "schema_version": 1,
        "model": {"input_size": 64, "in_channels": 2, "out_channels": 1, "channel_schedule": [4, 8],
                  "kernel_size": 4, "skip_connections": true},
        "train": {"learning_rate": 0.0004, "batch_size": 64, "epochs": epochs, "seed": 2},
        "split": {"seed": 3, "val_fraction": 0.25, "test_count": 2, "augment_per_sample": 3},
        "init_seed": 4
    });
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn datagen_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["datagen", "--count", "2", "--seed", "1", "--out", p(&a)]);
    ok(&[
        "datagen",
        "--count",
        "2",
        "--seed",
        "1",
        "--out",
        p(&b),
        "--workers",
        "2",
    ]);
    assert_eq!(files(&a).len(), 4);
    assert_eq!(files(&a), files(&b));

    let manifests: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() == "manifest.json")
        .collect();
    assert_eq!(manifests.len(), 1);
    let m: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "datagen");
    assert_eq!(m["seeds"]["dataset"], 1);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    let mb: Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"], mb["config_hash"]);
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"schema_version": 1, "grdi": {}}"#).unwrap();
    let out = gwhp(&[
        "datagen",
        "--count",
        "1",
        "--out",
        p(dir.path()),
        "--config",
        p(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grdi"));

    fs::write(&cfg, r#"{"schema_version": 2}"#).unwrap();
    assert_eq!(
        gwhp(&[
            "datagen",
            "--count",
            "1",
            "--out",
            p(dir.path()),
            "--config",
            p(&cfg)
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        gwhp(&["datagen", "--out", p(dir.path())]).status.code(),
        Some(1)
    );
    assert_eq!(
        gwhp(&[
            "train",
            "--data",
            p(dir.path()),
            "--config",
            p(&cfg),
            "--out",
            p(dir.path())
        ])
        .status
        .code(),
        Some(1)
    );

    let bogus = dir.path().join("m.gwnn");
    fs::write(&bogus, b"GWNNjunk").unwrap();
    let scen = dir.path().join("s.json");
    fs::write(&scen, "{}").unwrap();
    let out = gwhp(&[
        "predict",
        "--model",
        p(&bogus),
        "--scenario",
        p(&scen),
        "--out",
        p(&dir.path().join("o.gwhp")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(gwhp(&["--help"]).status.success());
}

#[test]
fn train_predict_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["datagen", "--count", "6", "--seed", "9", "--out", p(&data)]);
    let cfg = train_config(dir.path(), 2);
    let (r1, r2) = (dir.path().join("run1"), dir.path().join("run2"));
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&r1),
    ]);
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&r2),
    ]);
    let model = r1.join("model.gwnn");
    assert_eq!(
        fs::read(&model).unwrap(),
        fs::read(r2.join("model.gwnn")).unwrap()
    );
    let m: Value = serde_json::from_slice(&fs::read(r1.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["train"]["learning_rate"], 0.0004);
    assert_eq!(m["config"]["train"]["batch_size"], 64);
    assert_eq!(m["seeds"]["split"], 3);

    // model evaluation on its own held-out samples
    let ev = dir.path().join("eval");
    let out = ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--out",
        p(&ev),
        "--render",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("samples 2"));
    let report: Value = serde_json::from_slice(&fs::read(ev.join("report.json")).unwrap()).unwrap();
    assert!(report["aggregate_relative_error"].as_f64().unwrap() > 0.0);
    assert_eq!(fs::read_dir(ev.join("renders")).unwrap().count(), 2);

    // predictions written by `predict` are read back by `eval`
    let preds = dir.path().join("preds");
    fs::create_dir(&preds).unwrap();
    for k in 0..6 {
        let stem = format!("sample_{k:05}");
        let scen = data.join(format!("{stem}.json"));
        ok(&[
            "predict",
            "--model",
            p(&model),
            "--scenario",
            p(&scen),
            "--out",
            p(&preds.join(format!("{stem}.gwhp"))),
        ]);
    }
    assert!(preds.join("sample_00000.gwhp.manifest.json").exists());
    let ev2 = dir.path().join("eval2");
    ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--predictions",
        p(&preds),
        "--out",
        p(&ev2),
    ]);
    let r2: Value = serde_json::from_slice(&fs::read(ev2.join("report.json")).unwrap()).unwrap();
    let (a, b) = (
        report["aggregate_relative_error"].as_f64().unwrap(),
        r2["aggregate_relative_error"].as_f64().unwrap(),
    );
    // stored predictions are f32
    assert!((a - b).abs() < 1e-5 * a, "{a} vs {b}");
}

#[test]
fn perfect_oracle_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["datagen", "--count", "2", "--seed", "5", "--out", p(&data)]);
    let ev = dir.path().join("eval");
    let out = ok(&[
        "eval",
        "--data",
        p(&data),
        "--predictions",
        p(&data),
        "--out",
        p(&ev),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("aggregate relative error 0.0000"));
    let r: Value = serde_json::from_slice(&fs::read(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["aggregate_relative_error"], 0.0);
    assert!(r["lahm_aggregate_relative_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn lahm_command_writes_field() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("lahm.json");
    let cfg = json!({
        "schema_version": 1,
        "lahm": {"injection_rate": 5.0e-5, "delta_t_inj": 5.0, "velocity": 1.0e-6, "alpha_l": 1.8,
                 "alpha_t": 0.18, "thickness": 1.0, "porosity": 0.2, "time": 6.2e7},
        "flow_angle_deg": 90.0
    });
    fs::write(&params, cfg.to_string()).unwrap();
    let out = dir.path().join("plume/lahm.gwhp");
    ok(&["lahm", "--params", p(&params), "--out", p(&out)]);
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"GWHP");
    assert!(dir.path().join("plume/lahm.gwhp.manifest.json").exists());

    fs::write(
        &params,
        json!({"schema_version": 1, "lahm": {"velocity": -1.0}}).to_string(),
    )
    .unwrap();
    assert_eq!(
        gwhp(&["lahm", "--params", p(&params), "--out", p(&out)])
            .status
            .code(),
        Some(1)
    );
}
