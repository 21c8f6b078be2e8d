use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gadget::simlab::{generate, SimDesign};
use serde_json::Value;

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn load(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn check(schema: &str, doc: &Path) {
    let schema = load(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc_value = load(doc);
    let errors: Vec<String> = validator.iter_errors(&doc_value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{} violates schema: {errors:#?}", doc.display());
}

fn run(args: &[&str], cwd: &Path) {
    let o = Command::new(env!("CARGO_BIN_EXE_gadget")).args(args).current_dir(cwd).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cli_outputs_match_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let (d, _) = generate(&SimDesign::spurious(200, 3)).unwrap();
    d.write_csv(&cwd.join("sp.csv")).unwrap();

    for method in ["pd", "ale", "sd"] {
        let out = format!("ex-{method}");
        run(&["explain", "--data", "sp.csv", "--target", "y", "--learner", "linear-interactions", "--method", method, "--h-statistic", "--out", &out], cwd);
        let out = cwd.join(out);
        check("tree.schema.json", &out.join("tree.json"));
        check("curves.schema.json", &out.join("curves.json"));
        check("report.schema.json", &out.join("report.json"));
        check("manifest.schema.json", &out.join("manifest.json"));
    }

    run(&["pint", "--data", "sp.csv", "--target", "y", "--learner", "linear-interactions", "--s", "8", "--prefilter-threshold", "0.001", "--bonferroni", "--out", "p.json"], cwd);
    check("pint.schema.json", &cwd.join("p.json"));
    check("manifest.schema.json", &cwd.join("p.manifest.json"));

    run(&["hstat", "--data", "sp.csv", "--target", "y", "--learner", "linear-interactions", "--out", "h.json"], cwd);
    check("hstat.schema.json", &cwd.join("h.json"));
    check("manifest.schema.json", &cwd.join("h.manifest.json"));

    run(
        &["simlab", "run", "--design", "spurious", "--n", "150", "--reps", "2", "--method", "pd", "--learner", "linear-interactions", "--pint", "--s", "5", "--h-statistic", "--out", "sim.json"],
        cwd,
    );
    check("simlab.schema.json", &cwd.join("sim.json"));
    check("manifest.schema.json", &cwd.join("sim.manifest.json"));
}

#[test]
fn schemas_reject_wrong_version() {
    let schema = load(&schema_dir().join("report.schema.json"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let doc = serde_json::json!({
        "schema_version": 2, "method": "pd", "features": [], "splits": [], "split_features": [],
        "r2": [], "r2_total": 0.0, "warnings": []
    });
    assert!(!validator.is_valid(&doc));
}
