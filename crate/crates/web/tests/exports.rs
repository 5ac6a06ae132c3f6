use mealwise_web::{ablation_curves, default_requests, gate_sweep, trace_personalizer};
use serde_json::Value;

fn call(f: fn(&str) -> String, req: &str) -> Value {
    serde_json::from_str(&f(req)).unwrap()
}

#[test]
fn ablation_returns_five_curves() {
    let v = call(
        ablation_curves,
        r#"{"classes": 12, "users": 3, "meals": 60, "foods_per_user": 5, "checkpoints": [30, 60]}"#,
    );
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 5);
    for c in curves {
        assert_eq!(c["mean"].as_array().unwrap().len(), 2);
    }
    assert_eq!(curves[0]["scenario"], "base");
}

#[test]
fn gate_sweep_moves_from_supporter_to_base() {
    let v = call(
        gate_sweep,
        r#"{"feature_angle": 0, "mapper_rotation": 90, "supporter_angles": [0, 90], "gammas": [0, 1000]}"#,
    );
    // Supporter of h = (1, 0) against rows at 0 and 90 degrees is (1, 0).
    let a0 = v["sweep"][0]["angle"].as_f64().unwrap();
    let a1 = v["sweep"][1]["angle"].as_f64().unwrap();
    assert!(a0.abs() < 1e-9);
    assert!((a1 - 90.0).abs() < 0.1);
    let base = v["base"].as_array().unwrap();
    assert!((base[1].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn trace_learns_a_repeated_food() {
    let v = call(
        trace_personalizer,
        r#"{"probabilities": [0.5, 0.3, 0.2], "meals": [[2,0,0],[2,0,0],[2,0,0],[2,0,0],[2,0,0]], "alphas": [0.5, 0.5, 0.5]}"#,
    );
    let steps = v["steps"].as_array().unwrap();
    assert_eq!(steps[0]["predicted"], 0);
    assert_eq!(steps[4]["predicted"], 2);
    let mf: f64 = steps[4]["mf"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((mf - 1.0).abs() < 1e-12);
}

#[test]
fn bad_requests_report_errors() {
    assert!(call(trace_personalizer, "{").get("error").is_some());
    assert!(
        call(trace_personalizer, r#"{"probabilities": [1.0], "meals": [[3, 0, 0]]}"#)
            .get("error")
            .is_some()
    );
    assert!(call(gate_sweep, r#"{"gammas": [-1]}"#).get("error").is_some());
}

#[test]
fn defaults_are_valid_requests() {
    let d: Value = serde_json::from_str(&default_requests()).unwrap();
    let trace = call(trace_personalizer, &d["trace_personalizer"].to_string());
    assert_eq!(trace["steps"].as_array().unwrap().len(), 4);
    assert!(call(gate_sweep, &d["gate_sweep"].to_string()).get("sweep").is_some());
}
