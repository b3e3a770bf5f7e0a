use std::fs;
use std::process::{Command, Output};

fn lochar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lochar"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"n": 3, "sampels_per_series": 10}"#).unwrap();
    let out = lochar(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn missing_inputs_exit_with_stage_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let missing = dir.path().join("nope.json");
    let missing = missing.to_str().unwrap();
    let moduli = lochar(&[
        "--out",
        out_dir,
        "reconstruct-moduli",
        "--method",
        "sinkhorn",
        "--input",
        missing,
    ]);
    assert_eq!(moduli.status.code(), Some(11));
    let phases = lochar(&[
        "--out",
        out_dir,
        "reconstruct-phases",
        "--series-dir",
        out_dir,
        "--moduli",
        missing,
    ]);
    assert_eq!(phases.status.code(), Some(12));
    let compare = lochar(&["--out", out_dir, "compare", "--a", missing, "--b", missing]);
    assert_eq!(compare.status.code(), Some(13));
}

#[test]
fn simulate_then_reconstruct_recovers_the_chip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let rec = root.join("rec");
    let (data_s, rec_s) = (data.to_str().unwrap(), rec.to_str().unwrap());
    assert!(lochar(&["--seed", "3", "--out", data_s, "simulate"])
        .status
        .success());
    let intensity = data.join("intensity_matrix.json");
    let out = lochar(&[
        "--out",
        rec_s,
        "reconstruct-moduli",
        "--method",
        "sinkhorn",
        "--input",
        intensity.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let moduli = rec.join("moduli.json");
    let out = lochar(&[
        "--out",
        rec_s,
        "reconstruct-phases",
        "--series-dir",
        data_s,
        "--moduli",
        moduli.to_str().unwrap(),
        "--refine",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let unitary = rec.join("unitary.json");
    let truth = data.join("ground_truth.json");
    let out = lochar(&[
        "--out",
        rec_s,
        "compare",
        "--a",
        unitary.to_str().unwrap(),
        "--b",
        truth.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rec.join("comparison.json")).unwrap()).unwrap();
    let columns = cmp["column_fidelity"].as_array().unwrap();
    assert!(columns.iter().all(|f| f.as_f64().unwrap() > 0.999), "{cmp}");
}
