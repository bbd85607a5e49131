use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "group": {
    "disks": [
      { "repelling": { "center": -2.5, "radius": 1.0 }, "attracting": { "center": 2.5, "radius": 1.0 } },
      { "repelling": { "center": -0.9, "radius": 0.35 }, "attracting": { "center": 0.9, "radius": 0.35 } }
    ]
  },
  "potentials": {
    "bump_a": { "kind": "bump", "target": { "kind": "closed_orbit", "word": [1] } }
  },
  "regions": [
    { "id": "near_a", "target": { "kind": "closed_orbit", "word": [1] }, "radius": 0.3 }
  ],
  "t_grid": [0, 1, 4, 16, 40],
  "n_range": [3, 4],
  "experiments": {
    "check": { "random_cases": 200 },
    "zero_temp": { "phi": "bump_a", "region": "near_a" }
  }
}"#;

fn orbitherm(args: &[&str], config: Option<&Path>, out: &Path, cache: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_orbitherm"));
    cmd.args(args).arg("--out").arg(out).arg("--cache").arg(cache).env_remove("ORBITHERM_CACHE");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn zero_temp_writes_csv_json_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (out, cache) = (dir.path().join("out"), dir.path().join("cache"));
    let o = orbitherm(&["zero-temp"], Some(&cfg), &out, &cache);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ") || l.starts_with("note: ")));

    let csv = std::fs::read_to_string(out.join("zero_temp.csv")).unwrap();
    assert!(csv.starts_with("t,pressure,phi_mean,entropy,n_stability,mass_near_a\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 6);

    let env: Value = serde_json::from_slice(&std::fs::read(out.join("zero_temp.json")).unwrap()).unwrap();
    for key in ["config_hash", "tool_version", "schema_version", "driver", "rows"] {
        assert!(env.get(key).is_some(), "missing {key}");
    }
    let hash = env["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(cache.join(hash).read_dir().unwrap().next().is_some());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let cache = dir.path().join("cache");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        orbitherm(&["check"], Some(&cfg), &out, &cache);
        orbitherm(&["zero-temp"], Some(&cfg), &out, &cache);
        outputs.push(
            ["check.csv", "zero_temp.csv"].map(|f| std::fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = orbitherm(&["check"], None, dir.path(), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn invalid_config_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "group": { "disks": [] }, "bogus": 1 }"#);
    let o = orbitherm(&["check"], Some(&cfg), &dir.path().join("out"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("bogus"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn driver_without_section_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = orbitherm(&["density"], Some(&cfg), &dir.path().join("out"), dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_verdict_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // t_max 1 cannot concentrate the equilibrium state on the target
    let cfg = write_config(dir.path(), &SMALL.replace("[0, 1, 4, 16, 40]", "[0, 0.5, 1]"));
    let o = orbitherm(&["zero-temp"], Some(&cfg), &dir.path().join("out"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL "));
}

#[test]
fn envelope_rows_match_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.json")).unwrap();
    let cfg = orbitherm::config::parse_config(&bytes).unwrap();
    let ctx = orbitherm::experiments::RunContext::new(cfg, Some(dir.path())).unwrap();
    let r = orbitherm::experiments::run_driver(&ctx, "nonergodic").unwrap();
    let env = r.envelope(&ctx.hash);
    assert_eq!(env["driver"], "nonergodic");
    assert_eq!(env["config_hash"], ctx.hash.as_str());
    assert_eq!(env["rows"].as_array().unwrap().len(), r.table.rows.len());
}
