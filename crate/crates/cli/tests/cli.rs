use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mfmc::scenario::{dump_defaults, list_scenarios, ScenarioConfig};

fn mfmc(args: &[&str], env_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfmc")).args(args).env("MFMC_OUT_DIR", env_root).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn lists_the_five_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfmc(&["list"], tmp.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().collect::<Vec<_>>(), list_scenarios());
}

#[test]
fn defaults_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    for name in list_scenarios() {
        let o = mfmc(&["dump-defaults", name], tmp.path());
        assert!(o.status.success(), "{name}");
        let parsed: ScenarioConfig = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(parsed, dump_defaults(name).unwrap(), "{name}");
    }
    let rx = stdout(&mfmc(&["dump-defaults", "qcsk-rx"], tmp.path()));
    assert!(rx.contains("\"A1\": 9.0"));
    let gate = stdout(&mfmc(&["dump-defaults", "and-gate"], tmp.path()));
    assert!(gate.contains("\"l_r_um\": 500.0"));
    assert_eq!(mfmc(&["dump-defaults", "nope"], tmp.path()).status.code(), Some(1));
}

#[test]
fn and_gate_thl_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g10");
    let o = mfmc(&["and-gate", "--thl", "10", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS  AND truth table at ThL = 10"));
    for f in ["O.csv", "I1.csv", "manifest.json", "checks.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "and-gate");
    assert_eq!(manifest["config"]["params"]["thl0"], 10.0);
    assert_eq!(manifest["passed"], true);

    let o = mfmc(&["and-gate", "--thl", "20"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL  AND truth table at ThL = 20"));
    assert!(tmp.path().join("and-gate").join("O.csv").exists());
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = mfmc(&["qcsk-tx", "--bits", "10", "--out", d.to_str().unwrap()], tmp.path());
        assert!(o.status.success());
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 4);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn link_with_a_feasible_y1_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&stdout(&mfmc(&["dump-defaults", "link"], tmp.path()))).unwrap();
    cfg["params"]["rx"]["injections"]["T4"] = 26.5.into();
    let path = tmp.path().join("link.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = mfmc(&["link", "--config", path.to_str().unwrap(), "--bits", "11"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS  11 → 11"));
}

#[test]
fn validate_writes_both_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfmc(&["validate", "cd-channel", "--plot"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let dir = tmp.path().join("validate");
    for f in ["analytical.csv", "oracle.csv", "analytical.svg"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(mfmc(&["validate", "nope"], tmp.path()).status.code(), Some(1));
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let text = stdout(&mfmc(&["dump-defaults", "and-gate"], tmp.path())).replace("\"m0\"", "\"mm0\"");
    let line = text.lines().position(|l| l.contains("mm0")).unwrap() + 1;
    let path = tmp.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let o = mfmc(&["and-gate", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {line}")), "{err}");

    let o = mfmc(&["qcsk-tx", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn misaligned_receiver_is_a_numeric_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&stdout(&mfmc(&["dump-defaults", "qcsk-rx"], tmp.path()))).unwrap();
    cfg["params"]["rx"]["lengths_um"]["L16"] = 3000.0.into();
    let path = tmp.path().join("rx.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let o = mfmc(&["qcsk-rx", "--config", path.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alignment"));
}
