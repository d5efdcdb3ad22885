use qfe_demo::{fairness_json, project_json, simulate_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

const SIM: &str = r#"{"bag_prevalence": [0.2, 0.8], "correction_prevalence": [0.5, 0.5],
    "skill": 0.2, "correction_size": 2000, "bag_size": 2000, "bandwidth": 0.05, "seed": 4}"#;

#[test]
fn simulate_reports_every_quantifier() {
    let out = parse(&simulate_json(SIM).unwrap());
    let truth: Vec<f64> = serde_json::from_value(out["truth"].clone()).unwrap();
    assert!((truth.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let est = out["estimates"].as_object().unwrap();
    assert_eq!(est.keys().collect::<Vec<_>>(), ["acc", "cc", "kdey", "pacc"]);
    let ae = |m: &str| est[m]["absolute_error"].as_f64().unwrap();
    // the bag is shifted away from the correction sample, so CC is biased
    // toward it and the corrected methods are not
    for m in ["acc", "pacc", "kdey"] {
        assert!(ae(m) < ae("cc"), "{m}: {out}");
        assert!(ae(m) < 0.05, "{m}: {out}");
    }
    assert_eq!(simulate_json(SIM).unwrap(), simulate_json(SIM).unwrap());
}

#[test]
fn simulate_rejects_bad_input() {
    for bad in [
        "not json",
        r#"{"bag_prevalence": [0.5, 0.6], "correction_prevalence": [0.5, 0.5], "skill": 0.5, "correction_size": 10, "bag_size": 10, "bandwidth": 0.05, "seed": 0}"#,
        r#"{"bag_prevalence": [0.5, 0.5], "correction_prevalence": [0.5, 0.5], "skill": 1.5, "correction_size": 10, "bag_size": 10, "bandwidth": 0.05, "seed": 0}"#,
        r#"{"bag_prevalence": [0.5, 0.5], "correction_prevalence": [0.3, 0.3, 0.4], "skill": 0.5, "correction_size": 10, "bag_size": 10, "bandwidth": 0.05, "seed": 0}"#,
        r#"{"bag_prevalence": [0.5, 0.5], "correction_prevalence": [0.5, 0.5], "skill": 0.5, "correction_size": 0, "bag_size": 10, "bandwidth": 0.05, "seed": 0}"#,
        r#"{"bag_prevalence": [0.5, 0.5]}"#,
    ] {
        assert!(simulate_json(bad).is_err(), "{bad}");
    }
}

#[test]
fn fairness_of_a_fixed_ranking() {
    // alternating groups match a uniform target exactly at even cutoffs
    let groups: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let input = serde_json::json!({"groups": groups, "target": [0.5, 0.5], "cutoffs": [2, 4, 8]});
    let out = parse(&fairness_json(&input.to_string()).unwrap());
    assert!(out["rkl"].as_f64().unwrap().abs() < 1e-12);
    assert!(out["rnd"].as_f64().unwrap().abs() < 1e-12);

    // all group 0: |0 - 0.5| at every cutoff
    let input = serde_json::json!({"groups": [0, 0, 0, 0], "target": [0.5, 0.5], "cutoffs": [2, 4]});
    let out = parse(&fairness_json(&input.to_string()).unwrap());
    assert!((out["rnd"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let three = serde_json::json!({"groups": [0, 1, 2, 0], "target": [0.4, 0.3, 0.3], "cutoffs": [4]});
    assert!(parse(&fairness_json(&three.to_string()).unwrap())["rnd"].is_null());

    let short = serde_json::json!({"groups": [0, 1], "target": [0.5, 0.5], "cutoffs": [4]});
    assert!(fairness_json(&short.to_string()).is_err());
    let bad_group = serde_json::json!({"groups": [0, 3], "target": [0.5, 0.5], "cutoffs": [2]});
    assert!(fairness_json(&bad_group.to_string()).is_err());
}

#[test]
fn projection() {
    let out = parse(&project_json("[0.5, 1.5, -1.0]").unwrap());
    let get = |key: &str| -> Vec<f64> { serde_json::from_value(out[key].clone()).unwrap() };
    let clipped = get("clipped");
    assert!((clipped[0] - 0.25).abs() < 1e-12 && (clipped[1] - 0.75).abs() < 1e-12 && clipped[2] == 0.0);
    let nearest = get("euclidean");
    assert!(nearest[0].abs() < 1e-12 && (nearest[1] - 1.0).abs() < 1e-12 && nearest[2] == 0.0);
    assert!(project_json("[]").is_err());
    assert!(project_json("{}").is_err());
}
