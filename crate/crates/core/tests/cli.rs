use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gadget::simlab::{generate, SimDesign};
use serde_json::Value;

fn gadget(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gadget")).args(args).current_dir(cwd).output().unwrap()
}

fn xor_csv(dir: &Path) -> PathBuf {
    let (d, _) = generate(&SimDesign::xor(0.0, 500, 11)).unwrap();
    let path = dir.join("xor.csv");
    d.write_csv(&path).unwrap();
    path
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("error json on stderr");
    serde_json::from_str(line).unwrap()
}

#[test]
fn explain_xor_splits_once_on_x3() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let o = gadget(&["explain", "--data", "xor.csv", "--target", "y", "--method", "pd", "--S", "1,2,3", "--Z", "1,2,3", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tree = read_json(&dir.path().join("out/tree.json"));
    assert_eq!(tree["n_leaves"], 2);
    assert_eq!(tree["nodes"][0]["split"]["feature"], "x3");
    assert!(tree["nodes"][0]["split"]["threshold"].as_f64().unwrap().abs() <= 0.15);
    for f in ["curves.json", "report.json", "report.csv", "manifest.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let args = |out: &'static str| ["explain", "--data", "xor.csv", "--target", "y", "--method", "ale", "--seed", "5", "--out", out];
    assert!(gadget(&args("a"), dir.path()).status.success());
    assert!(gadget(&args("b"), dir.path()).status.success());
    let a = read_json(&dir.path().join("a/manifest.json"));
    let b = read_json(&dir.path().join("b/manifest.json"));
    assert_eq!(a["outputs"], b["outputs"]);
    assert_eq!(fs::read(dir.path().join("a/tree.json")).unwrap(), fs::read(dir.path().join("b/tree.json")).unwrap());
}

#[test]
fn manifest_hashes_match_files() {
    use sha2::{Digest, Sha256};
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let o = gadget(&["explain", "--data", "xor.csv", "--target", "y", "--learner", "linear-interactions", "--out", "out"], dir.path());
    assert!(o.status.success());
    let m = read_json(&dir.path().join("out/manifest.json"));
    for (name, hash) in m["outputs"].as_object().unwrap() {
        let bytes = fs::read(dir.path().join("out").join(name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), hash.as_str().unwrap(), "{name}");
    }
    let input = fs::read(dir.path().join("xor.csv")).unwrap();
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&input)));
}

#[test]
fn unknown_feature_name_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let o = gadget(&["explain", "--data", "xor.csv", "--target", "y", "--S", "x1,nope", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["exit_code"], 2);
    assert!(e["message"].as_str().unwrap().contains("nope"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_flag_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadget(&["explain", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadget(&["explain", "--data", "absent.csv", "--target", "y", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["exit_code"], 3);
}

#[test]
fn constant_model_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,y\n");
    for i in 0..60 {
        csv.push_str(&format!("{},{},1.5\n", i as f64 / 10.0, (i % 7) as f64));
    }
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let o = gadget(&["hstat", "--data", "flat.csv", "--target", "y", "--learner", "linear", "--out", "h.json"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("h.json").exists());
}

#[test]
fn failed_write_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    // a directory where a report file should go makes the late write fail
    fs::create_dir_all(dir.path().join("out/report.csv")).unwrap();
    let o = gadget(&["explain", "--data", "xor.csv", "--target", "y", "--learner", "linear-interactions", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    for f in ["tree.json", "curves.json", "report.json", "manifest.json"] {
        assert!(!dir.path().join("out").join(f).exists(), "{f} left behind");
    }
}

#[test]
fn pint_warns_on_small_s() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let o = gadget(&["pint", "--data", "xor.csv", "--target", "y", "--learner", "linear-interactions", "--s", "5", "--out", "p.json", "--handoff", "s.json"], dir.path());
    assert!(o.status.success());
    let p = read_json(&dir.path().join("p.json"));
    assert!(p["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("s below recommended minimum")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s below recommended minimum"));
    let h = read_json(&dir.path().join("s.json"));
    assert_eq!(h["S"], p["selected_names"]);
    assert!(dir.path().join("p.manifest.json").exists());
}

#[test]
fn pint_rejects_external_learner() {
    let dir = tempfile::tempdir().unwrap();
    xor_csv(dir.path());
    let o = gadget(&["pint", "--data", "xor.csv", "--target", "y", "--learner", "external", "--predictions", "preds.csv", "--out", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("PINT requires a trainable learner"));
}

#[test]
fn simlab_writes_json_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadget(
        &["simlab", "run", "--design", "xor", "--rho", "0.4", "--n", "200", "--reps", "2", "--method", "pd,ale", "--learner", "linear-interactions", "--out", "sim.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sim = read_json(&dir.path().join("sim.json"));
    assert_eq!(sim["records"].as_array().unwrap().len(), 4);
    for f in ["sim.records.csv", "sim.summary.csv", "sim.features.csv", "sim.manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn simlab_rejects_unsupported_rho() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadget(&["simlab", "run", "--design", "xor", "--rho", "0.5", "--out", "sim.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("0.9"));
}

#[test]
fn version_prints() {
    let dir = tempfile::tempdir().unwrap();
    let o = gadget(&["version"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("gadget "));
}
