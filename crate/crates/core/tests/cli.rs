use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maas_core::pipeline::{EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK};

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.json")
}

fn maas(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maas"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = maas(dir.path(), &["base"]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn bad_flags_and_grids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&maas(dir.path(), &["frobnicate"])), EXIT_CONFIG);
    assert_eq!(code(&maas(dir.path(), &["sweep", "--eta-grid", "1:0:0.1"])), EXIT_CONFIG);
    assert_eq!(code(&maas(dir.path(), &["--help"])), EXIT_OK);
}

#[test]
fn assign_without_base_is_a_state_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let o = maas(dir.path(), &["assign", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), EXIT_CONFIG);
    assert!(String::from_utf8_lossy(&o.stderr).contains("base"));
}

#[test]
fn toy_pipeline_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config();
    let cfg = cfg.to_str().unwrap();
    let o = maas(dir.path(), &["dump", "--config", cfg]);
    assert_eq!(code(&o), EXIT_OK);
    assert!(dir.path().join("links.csv").exists());

    for step in ["base", "assign"] {
        let o = maas(dir.path(), &[step, "--config", cfg, "--max-outer", "300"]);
        assert!([EXIT_OK, EXIT_NOT_CONVERGED].contains(&code(&o)), "{step}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = maas(dir.path(), &["price", "--config", cfg]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("price: eta 1"));
    let o = maas(dir.path(), &["report", "--config", cfg]);
    assert_eq!(code(&o), EXIT_OK);
    for f in ["base.json", "assignment.json", "pricing.json", "pricing.csv", "report.json", "metrics.csv", "voc.csv", "assign_trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let header = std::fs::read_to_string(dir.path().join("pricing.csv")).unwrap();
    assert!(header.lines().count() > 1);
}
