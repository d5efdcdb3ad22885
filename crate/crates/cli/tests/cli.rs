use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SPEC: &str = "topic_count = 6\ndocs_per_pool = 1500\nlabeled_extra_per_group = 60\n";

const BENCH: &str = r#"
seed = 3
classifier_docs_per_group = 40
lq_cap_per_group = 50
pool_sizes = [600, "full"]
cutoffs = [10, 20]
retrieval_depth = 100
bandwidth_candidates = [0.05, 0.1]
classifier_grid = [{ c = 1.0, class_weighting = "balanced" }]

[data]
kind = "synthetic"
topic_count = 6
docs_per_pool = 1200
labeled_extra_per_group = 60
"#;

fn qfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfe")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = qfe(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    qfe(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let data = dir.join("data");
    let v = ok_json(&["generate", "--spec", p(&spec), "--out", p(&data), "--seed", "1"]);
    assert_eq!(v["unlabeled"], 1500);
    assert_eq!(v["labeled"], 1740);
    data
}

#[test]
fn generate_writes_corpora_and_queries() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    for f in ["L.jsonl", "U.jsonl", "queries.tsv", "validation_queries.tsv"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let queries = fs::read_to_string(data.join("queries.tsv")).unwrap();
    assert_eq!(queries.lines().count(), 6);
    assert!(queries.starts_with("q000\t"));

    let again = dir.path().join("again");
    let spec = dir.path().join("spec.toml");
    ok_json(&["generate", "--spec", p(&spec), "--out", p(&again), "--seed", "1"]);
    assert_eq!(fs::read(data.join("U.jsonl")).unwrap(), fs::read(again.join("U.jsonl")).unwrap());
}

#[test]
fn generate_needs_an_existing_parent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("data");
    assert_eq!(code(&["generate", "--out", p(&out)]), 2);
}

#[test]
fn train_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path());
    let model = dir.path().join("model.json");
    let v = ok_json(&[
        "train",
        "--corpus",
        p(&data.join("L.jsonl")),
        "--model-out",
        p(&model),
        "--c-values",
        "1,10",
        "--weightings",
        "balanced",
    ]);
    assert_eq!(v["grid"].as_array().unwrap().len(), 2);
    assert!(model.is_file());

    let ranking = dir.path().join("ranking.jsonl");
    let u = fs::read_to_string(data.join("U.jsonl")).unwrap();
    fs::write(&ranking, u.lines().take(120).collect::<Vec<_>>().join("\n")).unwrap();
    let query = "tp00w000 tp00w001 tp00w002";
    let base = |method: &'static str| {
        vec![
            "estimate".to_string(),
            "--model".into(),
            p(&model).into(),
            "--correction".into(),
            p(&data.join("L.jsonl")).into(),
            "--ranking".into(),
            p(&ranking).into(),
            "--query".into(),
            query.into(),
            "--method".into(),
            method.into(),
            "--cutoffs".into(),
            "50,100".into(),
            "--target".into(),
            "0.55,0.25,0.15,0.05".into(),
        ]
    };
    for method in ["naive", "cc", "acc", "pacc", "kdey"] {
        let args = base(method);
        let v = ok_json(&args.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(v["method"], method);
        let estimates = v["estimates"].as_object().unwrap();
        assert_eq!(estimates.len(), 2);
        for est in estimates.values() {
            let sum: f64 = est.as_object().unwrap().values().map(|x| x.as_f64().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-9, "{method}: {est}");
        }
        assert!(v["rkl"].as_f64().unwrap() >= 0.0);
        assert!(v["rnd"].is_null());
    }

    let with = |method: &'static str, edit: &dyn Fn(&mut Vec<String>)| {
        let mut args = base(method);
        edit(&mut args);
        code(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_eq!(with("pmc_b", &|_| {}), 2);
    assert_eq!(with("nope", &|_| {}), 2);
    assert_eq!(with("pacc", &|a| a[14] = "0.5,0.5".into()), 2);
    assert_eq!(with("pacc", &|a| a[14] = "0.5,0.5,0.5,0.5".into()), 2);
    assert_eq!(with("pacc", &|a| a.drain(5..7).for_each(drop)), 2);
    assert_eq!(with("kdey", &|a| a.drain(3..5).for_each(drop)), 2);
}

#[test]
fn benchmark_is_reproducible_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    fs::write(&config, BENCH).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = ok_json(&["benchmark", "--config", p(&config), "--out", p(&a)]);
    let second = ok_json(&["benchmark", "--config", p(&config), "--out", p(&b)]);
    assert_eq!(first, second);
    for f in ["report.json", "rae.csv", "fairness_ae.csv", "run.log"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timings.csv").is_file());
    assert_eq!(first["pools"].as_array().unwrap().len(), 2);
    assert_eq!(ok_json(&["report", "--input", p(&a)]), first);

    let narrow = ok_json(&[
        "benchmark",
        "--config",
        p(&config),
        "--methods",
        "cc,pacc",
        "--pool-sizes",
        "full",
        "--out",
        p(&dir.path().join("c")),
    ]);
    let methods = narrow["pools"][0]["methods"].as_object().unwrap();
    assert_eq!(methods.keys().collect::<Vec<_>>(), ["cc", "pacc"]);
}

#[test]
fn bad_benchmark_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    fs::write(&config, format!("unknown_key = 1\n{BENCH}")).unwrap();
    let out = p(&dir.path().join("out")).to_string();
    assert_eq!(code(&["benchmark", "--config", p(&config), "--out", &out]), 2);
    fs::write(&config, BENCH).unwrap();
    assert_eq!(code(&["benchmark", "--config", p(&config), "--methods", "pmc_b", "--out", &out]), 2);
    assert_eq!(code(&["benchmark", "--config", p(&config), "--pool-sizes", "lots", "--out", &out]), 2);
    assert_eq!(code(&["benchmark", "--config", p(&dir.path().join("none.toml"))]), 2);
    assert_eq!(code(&["report", "--input", p(dir.path())]), 2);
    assert_eq!(code(&[]), 2);
}
