use hwctrl_web::{analyze_json, simulate_json, solve_json};
use serde_json::Value;

fn spec(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../specs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn analyze_reports_symbolic_forms() {
    let v: Value = serde_json::from_str(&analyze_json(&spec("n_model.json")).unwrap()).unwrap();
    let psi: Vec<&str> = v["psi"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert_eq!(psi, ["Psi[1,1] = b1", "Psi[1,2] = a1 - b1", "Psi[2,2] = a2"]);
    assert_eq!(v["cone_two_sided"], true);
    assert!(v["certificate"]["c_min"].as_f64().unwrap() > 0.0);
}

#[test]
fn solve_returns_a_value_per_cell() {
    let v: Value = serde_json::from_str(&solve_json(&spec("n_model.json"), 3.0, 0.25).unwrap()).unwrap();
    let n = v["nodes"].as_u64().unwrap() as usize;
    assert_eq!(v["v"].as_array().unwrap().len(), n * n);
    assert!(v["rho"].as_f64().unwrap() > 0.0);
    assert!(solve_json(&spec("w_model.json"), 3.0, 0.25).is_err());
    assert!(solve_json(&spec("n_model.json"), 8.0, 0.01).is_err());
}

#[test]
fn simulate_is_seeded() {
    let a = simulate_json(&spec("inverted_v.json"), 100.0, 0.01, 4).unwrap();
    let b = simulate_json(&spec("inverted_v.json"), 100.0, 0.01, 4).unwrap();
    assert_eq!(a, b);
    let bad = simulate_json("{", 100.0, 0.01, 4);
    assert!(bad.is_err());
}
