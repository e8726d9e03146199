use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hwctrl::hjb::HjbSolution;
use serde_json::Value;

fn spec(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs").join(name)
}

fn hwctrl(args: &[&str], spec: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hwctrl"))
        .args(args)
        .arg("--spec")
        .arg(spec)
        .arg("--out")
        .arg(out)
        .env_remove("HWCTRL_THREADS")
        .output()
        .expect("binary runs")
}

fn error_line(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn solve_writes_solution_and_value_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = hwctrl(&["solve", "--radius", "4"], &spec("n_model.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("hjb_solution.json")).unwrap();
    let sol: HjbSolution = serde_json::from_str(&text).unwrap();
    let mut again = serde_json::to_string_pretty(&sol).unwrap();
    again.push('\n');
    assert_eq!(again, text);
    let csv = std::fs::read_to_string(dir.path().join("V.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,V,uc1,uc2,us1,us2"));
    assert_eq!(lines.count(), sol.v.len());
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"], serde_json::json!(["hjb_solution.json", "V.csv"]));
}

#[test]
fn degenerate_plan_exits_with_the_planning_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = hwctrl(&["plan"], &spec("n_model_degenerate.json"), dir.path());
    assert_eq!(o.status.code(), Some(11));
    let e = error_line(&o);
    assert_eq!(e["error"], "PoolingViolated");
    assert_eq!(e["family"], "plan");
}

#[test]
fn cyclic_graph_exits_with_the_network_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cycle.json");
    std::fs::write(
        &path,
        r#"{"classes":[{"lambda":1},{"lambda":1}],"pools":[{"nu":1},{"nu":1}],
           "edges":[{"class":1,"pool":1,"mu":1},{"class":1,"pool":2,"mu":1},
                    {"class":2,"pool":1,"mu":1},{"class":2,"pool":2,"mu":1}]}"#,
    )
    .unwrap();
    let o = hwctrl(&["validate"], &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(10));
    assert_eq!(error_line(&o)["error"], "NotATree");
}

#[test]
fn bad_inputs_map_to_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hwctrl(&["plan"], &dir.path().join("missing.json"), dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = hwctrl(&["plan", "--set", "lambda.9=1"], &spec("n_model.json"), dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_line(&o)["error"], "Override");
    let o = hwctrl(&["solve", "--constrained"], &spec("n_model.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--horizon", "200", "--seed", "5"];
    assert!(hwctrl(&args, &spec("w_model.json"), a.path()).status.success());
    assert!(hwctrl(&args, &spec("w_model.json"), b.path()).status.success());
    for f in ["simulate.json", "path.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let args = ["ctmc", "--horizon", "100", "--n", "16", "--seed", "5"];
    assert!(hwctrl(&args, &spec("w_model.json"), a.path()).status.success());
    assert!(hwctrl(&args, &spec("w_model.json"), b.path()).status.success());
    assert_eq!(std::fs::read(a.path().join("ctmc.json")).unwrap(), std::fs::read(b.path().join("ctmc.json")).unwrap());
}

#[test]
fn every_stage_round_trips_its_json() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("validate", "validate.json"),
        ("plan", "plan.json"),
        ("drift", "drift_form.json"),
        ("gmap", "gmap.json"),
        ("stability", "stability.json"),
    ] {
        let out = dir.path().join(cmd);
        let o = hwctrl(&[cmd], &spec("example4.json"), &out);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(out.join(file)).unwrap();
        // full-precision floats survive a parse and re-print unchanged
        let v: Value = serde_json::from_str(&text).unwrap();
        let w: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(v, w, "{cmd}");
    }
    let typed = std::fs::read_to_string(dir.path().join("drift").join("drift_form.json")).unwrap();
    let form: hwctrl::elimination::DriftForm = serde_json::from_str(&typed).unwrap();
    assert_eq!(serde_json::to_string_pretty(&form).unwrap() + "\n", typed);
}

#[test]
fn simulate_accepts_a_solved_policy() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hwctrl(&["solve", "--radius", "3", "--mesh", "0.05"], &spec("inverted_v.json"), dir.path()).status.success());
    let policy = dir.path().join("hjb_solution.json");
    let o = hwctrl(
        &["simulate", "--horizon", "500", "--policy", policy.to_str().unwrap()],
        &spec("inverted_v.json"),
        &dir.path().join("sim"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = hwctrl(&["simulate", "--policy", policy.to_str().unwrap()], &spec("n_model.json"), &dir.path().join("bad"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gmap_evaluates_psi_at_a_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = hwctrl(&["gmap", "--alpha", "2,-1", "--beta", "0.5,0.5"], &spec("n_model.json"), dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    // psi11 = b1, psi12 = a1 - b1, psi22 = a2
    assert_eq!(csv, "class,pool,psi\n1,1,0.5\n1,2,1.5\n2,2,-1\n");
    let o = hwctrl(&["gmap", "--alpha", "2,-1", "--beta", "3,3"], &spec("n_model.json"), dir.path());
    assert_eq!(o.status.code(), Some(12));
    assert_eq!(error_line(&o)["error"], "NotInDomainDG");
}

#[test]
fn stability_writes_an_empty_violation_table() {
    let dir = tempfile::tempdir().unwrap();
    assert!(hwctrl(&["stability"], &spec("w_model.json"), dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("stability_violations.csv")).unwrap();
    assert_eq!(csv, "x1,x2,x3\n");
}
