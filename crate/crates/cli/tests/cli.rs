//! End-to-end tests of the `btsc` binary: exit codes, output files, and
//! determinism, driven through real config files in temp directories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn btsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_btsc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn identity_cov(d: usize) -> Value {
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|r| (0..d).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    json!(rows)
}

/// Feature-mode spec: one strongly separated channel plus noise channels.
fn feature_spec_json(dir: &Path, n_per_class: usize, gap: f64, seed: u64) -> PathBuf {
    let d = 5;
    let mean1: Vec<f64> = (0..d).map(|i| if i < 2 { gap } else { 0.0 }).collect();
    let spec = json!({
        "k_classes": 2,
        "n_trials_per_class": n_per_class,
        "dim": d,
        "mode": "feature",
        "seed": seed,
        "channels": [
            {
                "name": "signal",
                "class_means": [vec![0.0; d], mean1],
                "class_covs": [identity_cov(d), identity_cov(d)],
            },
            {
                "name": "noise",
                "informative": false,
                "class_means": [vec![0.0; d], vec![0.0; d]],
                "class_covs": [identity_cov(d), identity_cov(d)],
            },
        ],
    });
    let path = dir.join("synth_spec.json");
    write_json(&path, &spec);
    path
}

/// Raw-mode spec at 500 Hz with a 0.4 s window (6 features).
fn raw_spec_json(dir: &Path, n_per_class: usize, seed: u64) -> PathBuf {
    let d = 6;
    let mean1: Vec<f64> = (0..d).map(|i| if i < 3 { 3.0 } else { 0.0 }).collect();
    let spec = json!({
        "k_classes": 2,
        "n_trials_per_class": n_per_class,
        "dim": d,
        "mode": "raw",
        "seed": seed,
        "window_s": 0.4,
        "fs": 500.0,
        "pre_onset_s": 0.25,
        "post_s": 0.1,
        "noise_sd": 0.05,
        "channels": [
            {
                "name": "sig",
                "raw_target": "erp",
                "class_means": [vec![0.0; d], mean1],
                "class_covs": [identity_cov(d), identity_cov(d)],
            },
            {
                "name": "ref",
                "informative": false,
                "raw_target": "erp",
                "class_means": [vec![0.0; d], vec![0.0; d]],
                "class_covs": [identity_cov(d), identity_cov(d)],
            },
        ],
    });
    let path = dir.join("raw_spec.json");
    write_json(&path, &spec);
    path
}

fn synth_dataset(dir: &Path, spec: &Path, out_name: &str) -> PathBuf {
    let out = dir.join(out_name);
    let result = btsc(&[
        "synth",
        "--config",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    out
}

#[test]
fn synth_creates_dataset_and_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = feature_spec_json(dir.path(), 10, 1.0, 7);
    let a = synth_dataset(dir.path(), &spec, "a");
    let b = synth_dataset(dir.path(), &spec, "b");
    assert!(a.join("manifest.json").exists());
    assert!(a.join("data.f32").exists());
    assert!(a.join("provenance.json").exists());
    assert!(!a.join(".partial").exists());
    let blob_a = std::fs::read(a.join("data.f32")).unwrap();
    let blob_b = std::fs::read(b.join("data.f32")).unwrap();
    assert_eq!(blob_a, blob_b);

    // a different seed must change the blob
    let c_out = dir.path().join("c");
    let result = btsc(&[
        "synth",
        "--config",
        spec.to_str().unwrap(),
        "--out",
        c_out.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert_eq!(exit_code(&result), 0);
    let blob_c = std::fs::read(c_out.join("data.f32")).unwrap();
    assert_ne!(blob_a, blob_c);
}

#[test]
fn synth_rejects_bad_json_with_io_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = dir.path().join("out");
    let result = btsc(&[
        "synth",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 2);
    // failed command leaves its partial marker behind
    assert!(out.join(".partial").exists());
}

#[test]
fn fit_eval_separable_data_reaches_95_percent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = feature_spec_json(dir.path(), 30, 4.0, 11);
    let data = synth_dataset(dir.path(), &spec, "data");
    let cfg = dir.path().join("run.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "feature_source": "direct",
            "seed": 3,
            "time_curve": true,
            "dump_features": true,
        }),
    );
    let out = dir.path().join("run_out");
    let result = btsc(&[
        "fit-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    for file in [
        "report.json",
        "tables.csv",
        "trace.csv",
        "curve.svg",
        "model.json",
        "features.csv",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    assert!(!out.join(".partial").exists());

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let acc = report["accuracy_mean"].as_f64().unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
    assert_eq!(report["selected"][0]["channel_name"], "signal");
    assert_eq!(
        report["accuracy_over_time"].as_array().unwrap().len(),
        report["config"]["feature_dim"].as_u64().unwrap() as usize
    );
}

#[test]
fn fit_eval_is_byte_deterministic_and_seed_overridable() {
    let dir = tempfile::tempdir().unwrap();
    let spec = feature_spec_json(dir.path(), 12, 1.5, 21);
    let data = synth_dataset(dir.path(), &spec, "data");
    let cfg = dir.path().join("run.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "feature_source": "direct",
            "seed": 5,
            "k_folds": 3,
            "time_curve": false,
        }),
    );
    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let result = btsc(&[
            "fit-eval",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&result), 0);
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let out = dir.path().join("r3");
    let result = btsc(&[
        "fit-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    assert_eq!(exit_code(&result), 0);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 99);
}

#[test]
fn fit_eval_small_class_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = feature_spec_json(dir.path(), 4, 1.0, 31);
    let data = synth_dataset(dir.path(), &spec, "data");
    let cfg = dir.path().join("run.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "feature_source": "direct",
            "k_folds": 5,
        }),
    );
    let out = dir.path().join("out");
    let result = btsc(&[
        "fit-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        3,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(out.join(".partial").exists());
}

#[test]
fn preprocess_runs_full_chain_and_records_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let spec = raw_spec_json(dir.path(), 12, 41);
    let data = synth_dataset(dir.path(), &spec, "raw");
    let cfg = dir.path().join("pre.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "target_fs": 500.0,
            "line_hz": 60.0,
            "max_harmonic_hz": 200.0,
            "bipolar_pairs": [[0, 1]],
        }),
    );
    let out = dir.path().join("clean");
    let result = btsc(&[
        "preprocess",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );

    let provenance: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap())
            .unwrap();
    let steps: Vec<&str> = provenance["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        steps,
        [
            "decimate",
            "demean",
            "remove_line_noise",
            "bipolar_rereference"
        ]
    );
    assert_eq!(provenance["warnings"].as_array().unwrap().len(), 0);

    // the cleaned dataset feeds straight into fit-eval over the dsp path
    let run_cfg = dir.path().join("run.json");
    write_json(
        &run_cfg,
        &json!({
            "dataset": out.join("manifest.json"),
            "window_s": 0.4,
            "k_folds": 3,
            "seed": 2,
            "time_curve": false,
        }),
    );
    let run_out = dir.path().join("run_out");
    let result = btsc(&[
        "fit-eval",
        "--config",
        run_cfg.to_str().unwrap(),
        "--out",
        run_out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(run_out.join("report.json")).unwrap())
            .unwrap();
    let acc = report["accuracy_mean"].as_f64().unwrap();
    assert!(acc >= 0.7, "end-to-end accuracy {acc}");
}

#[test]
fn preprocess_warns_when_output_rate_loses_high_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let spec = raw_spec_json(dir.path(), 3, 43);
    let data = synth_dataset(dir.path(), &spec, "raw");
    let cfg = dir.path().join("pre.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "target_fs": 200.0,
            "line_hz": 60.0,
            "max_harmonic_hz": 80.0,
            "bipolar_pairs": [[0, 1]],
        }),
    );
    let out = dir.path().join("clean");
    let result = btsc(&[
        "preprocess",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    let provenance: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap())
            .unwrap();
    let warnings = provenance["warnings"].as_array().unwrap();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].as_str().unwrap().contains("high-gamma"));
}

#[test]
fn preprocess_missing_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pre.json");
    write_json(
        &cfg,
        &json!({
            "dataset": dir.path().join("nope/manifest.json"),
            "bipolar_pairs": [[0, 1]],
        }),
    );
    let out = dir.path().join("clean");
    let result = btsc(&[
        "preprocess",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 2);
    assert!(String::from_utf8_lossy(&result.stderr).contains("manifest not found"));
}

#[test]
fn report_rerenders_from_existing_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = feature_spec_json(dir.path(), 10, 2.0, 51);
    let data = synth_dataset(dir.path(), &spec, "data");
    let cfg = dir.path().join("run.json");
    write_json(
        &cfg,
        &json!({
            "dataset": data.join("manifest.json"),
            "feature_source": "direct",
            "k_folds": 3,
            "time_curve": false,
        }),
    );
    let out = dir.path().join("out");
    let result = btsc(&[
        "fit-eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&result), 0);

    let render = dir.path().join("render");
    let result = btsc(&[
        "report",
        "--config",
        out.join("report.json").to_str().unwrap(),
        "--out",
        render.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&result),
        0,
        "{}",
        String::from_utf8_lossy(&result.stderr)
    );
    assert!(render.join("tables.csv").exists());
    assert!(render.join("curve.svg").exists());
    assert!(String::from_utf8_lossy(&result.stdout).contains("accuracy"));
}

#[test]
fn usage_errors_exit_1() {
    let result = btsc(&["fit-eval", "--config"]);
    assert_eq!(exit_code(&result), 1);
    let result = btsc(&["no-such-command"]);
    assert_eq!(exit_code(&result), 1);
}
