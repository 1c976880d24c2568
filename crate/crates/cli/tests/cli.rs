use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pstat_cli::config::RunConfig;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn pstat(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pstat"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn fixtures_round_trip() {
    for entry in std::fs::read_dir(fixture("")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg, "{}", path.display());
    }
}

#[test]
fn density_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("density_evens.toml");
    let out = pstat(&["density", "--assert", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["density.csv", "density_summary.csv", "density.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
    assert_eq!(manifest["command"], "density");
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert!(csv.starts_with("t,density\n"));
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[pstat]\nmethod = \"abel\"\nsequence = \"eta\"\nlimit = \"zero\"\n").unwrap();
    let out = pstat(&["pstat", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pstat.limit"), "{err}");
}

#[test]
fn unknown_reference_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[density]\nmethod = \"cesaro\"\nset = \"evens\"\n").unwrap();
    let out = pstat(&["density", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cesaro"));
}

#[test]
fn failed_check_exits_two_only_with_assert() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("alt.toml");
    std::fs::write(
        &cfg,
        "[pstat]\nmethod = \"abel\"\nsequence = \"alternating\"\nlimit = 0.0\n",
    )
    .unwrap();
    let path = cfg.to_str().unwrap();
    let out = pstat(&["pstat", "--config", path], &dir.path().join("a"));
    assert_eq!(out.status.code(), Some(0));
    let out = pstat(&["pstat", "--assert", "--config", path], &dir.path().join("b"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn document_only_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("pstat_eta.toml");
    let out = pstat(
        &["pstat", "--format", "document", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("pstat.json").exists());
    assert!(!dir.path().join("pstat.csv").exists());
}

#[test]
fn periodic_rejects_algebraic_system() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(
        &cfg,
        "[periodic]\nmethod = \"abel\"\nsystem = \"algebraic\"\nj_range = { kind = \"geometric\", start = 1, max = 8 }\n",
    )
    .unwrap();
    let out = pstat(&["periodic", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_section_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("density_evens.toml");
    let out = pstat(&["korovkin", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[korovkin]"));
}
