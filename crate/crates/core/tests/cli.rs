use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qnet::sweep::read_sweep_csv;

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiment.json")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn criteria_reports_entangled_released_light() {
    let cfg = config();
    let out = qnet(&["criteria", "--config", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let i = json["I"].as_f64().unwrap();
    assert!((i - 0.9533).abs() < 1e-4, "{i}");
    assert_eq!(json["entangled"], true);
    assert_eq!(json["stage"], "released");

    let all = qnet(&[
        "criteria",
        "--config",
        cfg.to_str().unwrap(),
        "--stage",
        "all",
        "--gains",
        "0.5",
    ]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&all)).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    assert_eq!(json[0]["gains"]["g2"], 0.5);
}

#[test]
fn sweep_writes_full_grid_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = qnet(&[
            "sweep",
            "--stage",
            "released",
            "--r",
            "0:1.2:121",
            "--eta",
            "0:1:101",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.ends_with('\n'));
    assert_eq!(text.lines().count(), 1 + 12_221);
    let cells = read_sweep_csv(text.as_bytes()).unwrap();
    let cell = cells
        .iter()
        .find(|c| (c.r - 0.38).abs() < 1e-12 && (c.eta - 0.16).abs() < 1e-12)
        .unwrap();
    assert!((cell.i - 0.952).abs() < 1e-3, "{}", cell.i);
}

#[test]
fn report_lists_six_rows_and_writes_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ledger.csv");
    let cfg = config();
    let out = qnet(&[
        "report",
        "--config",
        cfg.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("-3.30 ± 0.05"));
    let ledger = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(ledger.lines().count(), 19);
}

#[test]
fn validate_against_reference_passes_for_bundled_config() {
    let cfg = config();
    let out = qnet(&["validate", "--config", cfg.to_str().unwrap(), "--reference"]);
    let text = stdout(&out);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
}

#[test]
fn mc_is_reproducible_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let run = |name: &str| {
        let out_json = dir.path().join(name);
        let out = qnet(&[
            "mc",
            "--config",
            cfg.to_str().unwrap(),
            "--shots",
            "500",
            "--seed",
            "3",
            "--out",
            out_json.to_str().unwrap(),
            "--shots-csv",
            dir.path().join("est").to_str().unwrap(),
            "--traces",
            dir.path().join("tr").to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(out_json).unwrap()
    };
    let a = run("a.json");
    assert_eq!(a, run("b.json"));
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["shots"], 500);
    let x = std::fs::read_to_string(dir.path().join("est.released.x.csv")).unwrap();
    assert!(x.starts_with("shot,X1,X2,X3\n"));
    assert_eq!(x.lines().count(), 501);
    let tr = qnet::homodyne::export::read_trace_batch(&dir.path().join("tr.released.bin")).unwrap();
    assert_eq!(tr.shots, 500);
}

#[test]
fn exit_codes() {
    let out = qnet(&["criteria", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    assert_eq!(qnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        qnet(&["criteria", "--config", "/nonexistent.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        qnet(&["sweep", "--stage", "atomic", "--eta", "0:2:5"])
            .status
            .code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"r": 0.38, "eta_M": 1.5}"#).unwrap();
    assert_eq!(
        qnet(&["validate", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, r#"{"r": 0.38, "colour": "blue"}"#).unwrap();
    assert_eq!(
        qnet(&["validate", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    // calibration fails when the detector has no shot-noise margin at all
    let numeric = dir.path().join("numeric.json");
    std::fs::write(
        &numeric,
        r#"{"r": 0.38, "eta_M": 0.23, "eta_read": 0.68, "mc": {"shots": 50, "electronic_noise_rel": 1e300}}"#,
    )
    .unwrap();
    let out = qnet(&["mc", "--config", numeric.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert_eq!(qnet(&["--help"]).status.code(), Some(0));
}
