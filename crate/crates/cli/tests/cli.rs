use std::path::PathBuf;
use std::process::Command;

fn nsch() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsch"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn quadrature_check_reports_decreasing_errors() {
    let out = nsch().args(["check-quadrature", "--depth", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("reference (depth 8)"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn mesh_info_counts_unknowns() {
    let out = nsch().arg("mesh-info").arg(config("taylor-couette.toml")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("unknowns")).expect("unknowns line");
    let n: usize = line.split_whitespace().last().unwrap().parse().unwrap();
    assert_eq!(n, 8170);
}

#[test]
fn channel_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    std::fs::write(&cfg, "preset = \"channel\"\n[time]\nt_end = 3.0e-4\n").unwrap();
    let out = nsch().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("run")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["config.toml", "progress.csv", "final.vtk", "final.csv", "summary.toml"] {
        assert!(dir.path().join("run").join(file).exists(), "missing {file}");
    }
    assert!(String::from_utf8(out.stdout).unwrap().contains("wall slip"));
}

#[test]
fn invalid_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "preset = \"nowhere\"\n").unwrap();
    let out = nsch().arg("mesh-info").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
    let out = nsch().args(["check-quadrature", "--depth", "0"]).output().unwrap();
    assert!(!out.status.success());
}
