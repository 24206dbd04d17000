use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bflux::calibration::ConstantsFile;
use bflux::harness::RunManifest;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn bflux(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bflux"))
        .args(args)
        .env("BFLUX_OUT", out)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn validate_accepts_shipped_configs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["smoothing.toml", "cascade.toml", "dichotomy.toml", "equilibria.toml"] {
        let o = bflux(&["validate", &cfg(name)], tmp.path());
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn validate_rejects_critical_balance() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bflux(&["validate", &cfg("smoothing.toml"), "--set", "f.p=2.0", "--set", "g.p=1.5"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p+1 = 2q: not Dissipative"));
}

#[test]
fn validate_rejects_empty_supercritical_range() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bflux(&["validate", &cfg("cascade.toml"), "--set", "f.p=2.0", "--set", "g.p=1.2", "--set", "r=1.2"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("r0 = 0.5 ≤ 1: no supercritical range"));
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bflux(&["run", &cfg("cascade.toml"), "--set", "mesh.nodes=3"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

fn zero_cascade(out: &Path) -> Output {
    let constants = format!("constants_file={:?}", out.join("none.toml").display().to_string());
    bflux(&["run", &cfg("cascade.toml"), "--set", "data.kind=zero", "--set", "mesh.n=65", "--set", &constants], out)
}

#[test]
fn zero_data_cascade_passes_and_honours_output_env() {
    let tmp = tempfile::tempdir().unwrap();
    let o = zero_cascade(tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(tmp.path());
    assert!(m.all_passed());
    assert!(m.checks.iter().any(|c| c.name.contains("Robin")));
    for f in ["cascade.csv", "norms.csv", "snapshots.csv"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let constants = |d: &Path| format!("constants_file={:?}", d.join("none.toml").display().to_string());
    for (dir, c) in [(a.path(), constants(a.path())), (b.path(), constants(b.path()))] {
        let o = bflux(&["run", &cfg("cascade.toml"), "--set", "mesh.n=65", "--set", "T=0.0625", "--set", &c], dir);
        assert!(o.status.code().is_some());
    }
    for f in ["cascade.csv", "norms.csv", "snapshots.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn smoothing_without_constants_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let c = format!("constants_file={:?}", tmp.path().join("missing.toml").display().to_string());
    let o = bflux(&["run", &cfg("smoothing.toml"), "--set", &c], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("calibrate"));
}

#[test]
fn calibrate_then_smoothing_on_a_small_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let constants = tmp.path().join("constants.toml");
    let c = format!("constants_file={:?}", constants.display().to_string());
    let small = [
        "--set", "mesh.n=65", "--set", "dt=1e-3", "--set", "T=0.5", "--set", "save_interval=1e-2",
        "--set", "data.suite_size=3", "--set", "checks.gronwall_pairs=3", "--set", "k_schedule=[4.0, 8.0, 16.0]",
        "--set", "checks.smoothing_t_min=1e-2", "--set", &c,
    ];
    let path = cfg("smoothing.toml");
    let mut args = vec!["calibrate", &path[..]];
    args.extend(small);
    let o = bflux(&args, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let file = ConstantsFile::load(&constants).unwrap();
    assert_eq!(file.energy.len(), 3);
    assert_eq!(file.gronwall.len(), 3);

    args[0] = "run";
    let o = bflux(&args, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(tmp.path());
    assert_eq!(m.constants_hash.as_deref(), Some(&file.hash().unwrap()[..]));
    assert!(m.checks.iter().any(|c| c.name.starts_with("smoothing bound")));
}
