use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dvrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvrf"))
        .args(args)
        .env("RUST_LOG", "off")
        .env_remove("DVRF_OUT")
        .output()
        .expect("spawn dvrf")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_SWEEP: &str = r#"{
  "scenario": "eta_sweep",
  "seed": 3,
  "field": { "kind": "translation", "shift": [2.0, -1.0], "var": [1.0, 0.25] },
  "params": { "etas": [0.0, 1.0], "seeds": 2 },
  "plots": true
}"#;

fn run_ok(cfg: &Path, out: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = dvrf(&args);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

#[test]
fn eta_sweep_writes_expected_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let dir = run_ok(&cfg, tmp.path(), &[]);
    assert_eq!(dir.file_name().unwrap(), "eta_sweep-s3");

    let csv = fs::read_to_string(dir.join("etasweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "eta,seed,S_R,update_energy");
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(dir.join("etasweep_mean.csv").exists());
    assert!(dir.join("summary.json").exists());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "eta_sweep");
    assert_eq!(manifest["seed"], 3);
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    assert!(files.contains(&"etasweep.csv"));
    assert!(files.iter().any(|f| f.ends_with(".svg")));
    for f in files {
        assert!(dir.join(f).exists(), "{f} listed but missing");
    }
}

#[test]
fn reruns_are_byte_identical_and_do_not_clobber() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let a = run_ok(&cfg, tmp.path(), &["--threads", "1"]);
    let b = run_ok(&cfg, tmp.path(), &["--threads", "3"]);
    assert_ne!(a, b);
    for name in ["etasweep.csv", "etasweep_mean.csv", "summary.json", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let base = run_ok(&cfg, tmp.path(), &[]);
    let other = run_ok(&cfg, tmp.path(), &["--seed", "11"]);
    assert_eq!(other.file_name().unwrap(), "eta_sweep-s11");
    assert_ne!(
        fs::read(base.join("etasweep.csv")).unwrap(),
        fs::read(other.join("etasweep.csv")).unwrap()
    );
}

#[test]
fn unknown_scenario_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{ "scenario": "teleport", "seed": 0, "field": { "kind": "block" } }"#,
    );
    let o = dvrf(&["run", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scenario"), "{err}");
    assert!(err.contains("teleport"), "{err}");
}

#[test]
fn unknown_key_and_missing_seed_are_schema_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = write_config(
        tmp.path(),
        "extra.json",
        r#"{ "scenario": "edit", "seed": 0, "field": { "kind": "block" }, "sede": 1 }"#,
    );
    let o = dvrf(&["run", extra.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));

    let noseed = write_config(
        tmp.path(),
        "noseed.json",
        r#"{ "scenario": "edit", "field": { "kind": "block" } }"#,
    );
    let o = dvrf(&["run", noseed.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn divergence_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "diverge.json",
        r#"{
  "scenario": "edit",
  "seed": 0,
  "field": { "kind": "translation", "shift": [2.0, -1.0] },
  "params": { "edit": { "w_tgt": 16.5, "lr": { "kind": "constant", "value": 10000.0 } } }
}"#,
    );
    let o = dvrf(&["run", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = dvrf(&["run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn plot_renders_svg_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.json", SMALL_SWEEP);
    let dir = run_ok(&cfg, tmp.path(), &[]);
    let svg = tmp.path().join("sr.svg");
    let o = dvrf(&[
        "plot",
        dir.join("etasweep.csv").to_str().unwrap(),
        "--x",
        "eta",
        "--y",
        "S_R",
        "--group",
        "seed",
        "-o",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = fs::read_to_string(&svg).unwrap();
    assert!(body.starts_with("<svg"));
    assert_eq!(body.matches("<polyline").count(), 2);

    let o = dvrf(&[
        "plot",
        dir.join("etasweep.csv").to_str().unwrap(),
        "--x",
        "eta",
        "--y",
        "missing",
        "-o",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
