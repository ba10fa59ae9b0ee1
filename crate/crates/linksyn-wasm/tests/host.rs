//! Host-native checks of the browser exports. On non-wasm targets the
//! `wasm_bindgen` attribute leaves the functions callable as plain Rust,
//! so these tests exercise the exact code the page ships.

use linksyn_wasm::{demo_corpus, discipline_tally, graph_summary, mixture_demo, sample_paths_demo};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("export should return valid JSON")
}

#[test]
fn demo_corpus_is_loadable_jsonl() {
    let corpus = demo_corpus();
    let lines: Vec<&str> = corpus.lines().filter(|l| !l.trim().is_empty()).collect();
    assert!(lines.len() >= 20, "demo corpus should be non-trivial");
    for line in &lines {
        let v: Value = serde_json::from_str(line).expect("each line is a JSON object");
        assert!(v.get("id").is_some() && v.get("kps").is_some());
    }
}

#[test]
fn graph_summary_reports_consistent_shape() {
    let out = parse(&graph_summary(&demo_corpus()).unwrap());
    let nodes = out["nodes"].as_u64().unwrap();
    let edges = out["edges"].as_u64().unwrap();
    assert!(nodes > 0 && edges > 0);
    assert!(out["components"].as_u64().unwrap() >= 1);

    let frac = out["giant_component_node_fraction"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&frac));

    // Histogram masses must account for every node.
    let hist_total: u64 = out["degree_histogram"]
        .as_object()
        .unwrap()
        .values()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(hist_total, nodes);

    let top = out["top_nodes"].as_array().unwrap();
    assert!(!top.is_empty() && top.len() <= 10);
    let freqs: Vec<u64> = top.iter().map(|r| r["instances"].as_u64().unwrap()).collect();
    assert!(freqs.windows(2).all(|w| w[0] >= w[1]), "top nodes sorted by frequency");
}

#[test]
fn sampling_is_deterministic_and_respects_length() {
    let corpus = demo_corpus();
    for policy in ["coverage", "popularity", "hybrid"] {
        let a = sample_paths_demo(&corpus, policy, 2, 8, 0.5, 11).unwrap();
        let b = sample_paths_demo(&corpus, policy, 2, 8, 0.5, 11).unwrap();
        assert_eq!(a, b, "same seed must reproduce byte-identical output");

        let out = parse(&a);
        assert_eq!(out["policy"], policy);
        let paths = out["paths"].as_array().unwrap();
        assert_eq!(paths.len(), out["returned"].as_u64().unwrap() as usize);
        for p in paths {
            let kps = p["kps"].as_array().unwrap();
            assert!(kps.len() <= 2 && !kps.is_empty());
            assert_eq!(p["truncated"].as_bool().unwrap(), kps.len() < 2);
        }
    }
}

#[test]
fn sampling_seed_changes_output() {
    let corpus = demo_corpus();
    let a = sample_paths_demo(&corpus, "hybrid", 3, 10, 0.5, 1).unwrap();
    let b = sample_paths_demo(&corpus, "hybrid", 3, 10, 0.5, 2).unwrap();
    assert_ne!(a, b, "different seeds should shuffle the blend");
}

#[test]
fn hybrid_output_is_unique_and_sized() {
    let out = parse(&sample_paths_demo(&demo_corpus(), "hybrid", 2, 12, 0.25, 3).unwrap());
    let paths = out["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 12);
    let mut seen = std::collections::HashSet::new();
    for p in paths {
        assert!(seen.insert(p["kps"].to_string()), "blend must not repeat a KP sequence");
    }
}

#[test]
fn invalid_inputs_surface_as_errors() {
    let corpus = demo_corpus();
    assert!(sample_paths_demo(&corpus, "random", 2, 4, 0.5, 0)
        .unwrap_err()
        .contains("unknown policy"));
    assert!(sample_paths_demo(&corpus, "coverage", 9, 4, 0.5, 0)
        .unwrap_err()
        .contains("sampling error"));
    assert!(mixture_demo(&corpus, 0.5, "hellinger", 5).unwrap_err().contains("unknown divergence"));
    assert!(mixture_demo(&corpus, 0.5, "squared_euclidean", 0).unwrap_err().contains("draws"));
    assert!(graph_summary("{not json").unwrap_err().contains("corpus error"));
}

#[test]
fn mixture_rows_form_distributions_and_mixture_wins() {
    let out = parse(&mixture_demo(&demo_corpus(), 0.4, "squared_euclidean", 6).unwrap());
    let rows = out["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    for key in ["coverage", "popularity", "mixture"] {
        let total: f64 = rows.iter().map(|r| r[key].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{key} column must sum to 1, got {total}");
    }

    // The optimal mixture can never score worse than either endpoint.
    let kv_star = out["kv_mixture"].as_f64().unwrap();
    assert!(kv_star <= out["kv_coverage"].as_f64().unwrap() + 1e-12);
    assert!(kv_star <= out["kv_popularity"].as_f64().unwrap() + 1e-12);

    // Uniform maximizes expected node coverage among these three laws.
    let ec_uniform = out["expected_coverage_uniform"].as_f64().unwrap();
    assert!(ec_uniform + 1e-12 >= out["expected_coverage_empirical"].as_f64().unwrap());
    assert!(ec_uniform + 1e-12 >= out["expected_coverage_mixture"].as_f64().unwrap());
}

#[test]
fn mixture_lambda_extremes_recover_endpoints() {
    let corpus = demo_corpus();
    let at = |lambda: f64| parse(&mixture_demo(&corpus, lambda, "squared_euclidean", 3).unwrap());
    let lo = at(0.0);
    let hi = at(1.0);
    // λ=0 weights only the popularity target, λ=1 only the coverage target.
    for (out, col) in [(lo, "popularity"), (hi, "coverage")] {
        for r in out["rows"].as_array().unwrap() {
            let diff = (r["mixture"].as_f64().unwrap() - r[col].as_f64().unwrap()).abs();
            assert!(diff < 1e-12, "λ extreme should pin the mixture to {col}");
        }
    }
}

#[test]
fn tally_counts_every_instance() {
    let out = parse(&discipline_tally(&demo_corpus()).unwrap());
    let total: u64 = out.as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    let lines = demo_corpus().lines().filter(|l| !l.trim().is_empty()).count() as u64;
    assert_eq!(total, lines);
}
