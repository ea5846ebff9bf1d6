use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthbos"))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn render_writes_image_and_report() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["render"])
        .arg(config_dir().join("uniform_bos.json"))
        .args(["--seed", "3", "--threads", "2", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
    assert_eq!(report["threads"], 2);
    let pgm = std::fs::read(out.path().join("image.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n96 96\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n96 96\n65535\n".len() + 96 * 96 * 2);
}

#[test]
fn bos_writes_fields_and_metrics() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("bos")
        .arg(config_dir().join("uniform_bos.json"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["reference.pgm", "gradient.pgm", "measured.csv", "theory.csv", "metrics.csv", "dots.csv", "bos_report.json"] {
        assert!(out.path().join(f).is_file(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(out.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.starts_with("rms_error,peak_abs_error,pearson_correlation"));
    let measured = std::fs::read_to_string(out.path().join("measured.csv")).unwrap();
    assert!(measured.starts_with("x,y,dx,dy,mask\n"));
}

#[test]
fn trace_debug_writes_steps() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("trace-debug")
        .arg(config_dir().join("uniform_bos.json"))
        .args(["--dot", "2", "--ray", "5", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(out.path().join("trace_dot2_ray5.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("xi,x,y,z,tx,ty,tz"));
    // 10 mm of medium at half-millimetre steps
    assert!(lines.count() >= 20);
}

#[test]
fn validate_reports_json_and_exit_status() {
    let out = bin().args(["validate", "snell"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["suite"], "snell");
    assert_eq!(v["passed"], true);

    let bad = bin().args(["validate", "warp-drive"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown validation suite"));
}

#[test]
fn missing_config_is_an_error() {
    let out = bin().args(["render", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
