//! Browser bindings for the path-sampling machinery.
//!
//! Everything crosses the JS boundary as JSON strings: each export takes a
//! corpus in the same JSONL format the CLI reads, does its work in a single
//! call, and returns a JSON document for the page to render. Errors come
//! back as thrown strings. The functions are plain Rust on native targets,
//! so the host test suite drives exactly the code the browser runs.

use std::collections::BTreeMap;

use wasm_bindgen::prelude::*;

use linksyn::corpus::{parse_corpus, DisciplineTaxonomy, LoadMode};
use linksyn::graph::{build_graph, compute_stats, KpGraph};
use linksyn::rng::RngStream;
use linksyn::sampling::{
    empirical_distribution, expected_coverage, hybrid_blend, kv_value, optimal_mixture,
    uniform_distribution, Distribution, DivergenceKind, KvConfig, Path, Policy, WalkConfig,
};
use serde::Serialize;

/// The corpus preloaded into the playground textarea.
#[wasm_bindgen]
pub fn demo_corpus() -> String {
    include_str!("../assets/demo_corpus.jsonl").to_string()
}

fn graph_from_jsonl(corpus_jsonl: &str) -> Result<KpGraph, String> {
    let (corpus, _) = parse_corpus(corpus_jsonl, &DisciplineTaxonomy::default(), LoadMode::Strict)
        .map_err(|e| format!("corpus error: {e}"))?;
    build_graph(&corpus).map_err(|e| format!("graph error: {e}"))
}

#[derive(Serialize)]
struct NodeRow {
    label: String,
    instances: usize,
    degree: usize,
}

#[derive(Serialize)]
struct GraphSummary {
    nodes: usize,
    edges: usize,
    components: usize,
    giant_component_node_fraction: f64,
    giant_component_text_fraction: f64,
    assortativity: f64,
    degree_histogram: BTreeMap<usize, usize>,
    top_nodes: Vec<NodeRow>,
}

/// Operation 1: build the co-occurrence graph and report its shape.
#[wasm_bindgen]
pub fn graph_summary(corpus_jsonl: &str) -> Result<String, String> {
    let graph = graph_from_jsonl(corpus_jsonl)?;
    let stats = compute_stats(&graph);

    let mut rows: Vec<NodeRow> = (0..graph.node_count() as u32)
        .map(|v| NodeRow {
            label: graph.label(v).to_string(),
            instances: graph.node_freq(v),
            degree: graph.degree(v),
        })
        .collect();
    rows.sort_by(|a, b| b.instances.cmp(&a.instances).then(a.label.cmp(&b.label)));
    rows.truncate(10);

    let summary = GraphSummary {
        nodes: stats.node_count,
        edges: stats.edge_count,
        components: stats.component_count,
        giant_component_node_fraction: stats.giant_component_node_fraction,
        giant_component_text_fraction: stats.giant_component_text_fraction,
        assortativity: stats.assortativity,
        degree_histogram: stats.degree_histogram.clone(),
        top_nodes: rows,
    };
    serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PathsOut {
    policy: String,
    requested: usize,
    returned: usize,
    budget_exhausted: bool,
    paths: Vec<Path>,
}

fn walk(graph: &KpGraph, policy: Policy, length: usize, count: usize, seed: u64)
    -> Result<linksyn::sampling::PathSet, String>
{
    let cfg = WalkConfig { length, count, policy, rng_seed: seed, max_length: 3, retry_factor: 20 };
    linksyn::sampling::sample_paths(graph, &cfg).map_err(|e| format!("sampling error: {e}"))
}

/// Operation 2: sample KP paths under a policy. `hybrid` runs one coverage
/// and one popularity batch on derived seed substreams, then blends them to
/// `count` with coverage share `alpha` — the same derivation the CLI uses.
#[wasm_bindgen]
pub fn sample_paths_demo(
    corpus_jsonl: &str,
    policy: &str,
    length: usize,
    count: usize,
    alpha: f64,
    seed: u64,
) -> Result<String, String> {
    let graph = graph_from_jsonl(corpus_jsonl)?;
    let (paths, budget_exhausted) = match policy {
        "coverage" | "popularity" => {
            let p = if policy == "coverage" { Policy::Coverage } else { Policy::Popularity };
            let set = walk(&graph, p, length, count, seed)?;
            (set.paths, set.budget_exhausted)
        }
        "hybrid" => {
            let cov = walk(&graph, Policy::Coverage, length, count,
                RngStream::substream(seed, 0).next_u64())?;
            let pop = walk(&graph, Policy::Popularity, length, count,
                RngStream::substream(seed, 1).next_u64())?;
            let exhausted = cov.budget_exhausted || pop.budget_exhausted;
            let blended = hybrid_blend(&cov.paths, &pop.paths, alpha, count,
                RngStream::substream(seed, 2).next_u64())
                .map_err(|e| format!("blend error: {e}"))?;
            (blended, exhausted)
        }
        other => return Err(format!("unknown policy `{other}` (coverage|popularity|hybrid)")),
    };

    let out = PathsOut {
        policy: policy.to_string(),
        requested: count,
        returned: paths.len(),
        budget_exhausted,
        paths,
    };
    serde_json::to_string_pretty(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MixtureRow {
    label: String,
    coverage: f64,
    popularity: f64,
    mixture: f64,
}

#[derive(Serialize)]
struct MixtureOut {
    lambda: f64,
    divergence: String,
    kv_coverage: f64,
    kv_popularity: f64,
    kv_mixture: f64,
    expected_coverage_uniform: f64,
    expected_coverage_empirical: f64,
    expected_coverage_mixture: f64,
    draws: u32,
    rows: Vec<MixtureRow>,
}

/// Operation 3: the distribution-value view — per-node coverage/popularity
/// laws, their optimal mixture for the chosen λ and divergence, and the
/// expected node coverage of `draws` path starts under each law.
#[wasm_bindgen]
pub fn mixture_demo(
    corpus_jsonl: &str,
    lambda: f64,
    divergence: &str,
    draws: u32,
) -> Result<String, String> {
    let graph = graph_from_jsonl(corpus_jsonl)?;
    let divergence_kind = match divergence {
        "squared_euclidean" => DivergenceKind::SquaredEuclidean,
        "reverse_kl" => DivergenceKind::ReverseKl,
        other => {
            return Err(format!(
                "unknown divergence `{other}` (squared_euclidean|reverse_kl)"
            ))
        }
    };
    if draws == 0 {
        return Err("draws must be at least 1".to_string());
    }

    let pa = uniform_distribution(&graph).map_err(|e| e.to_string())?;
    let pb = empirical_distribution(&graph).map_err(|e| e.to_string())?;
    let kv = KvConfig { lambda, divergence: divergence_kind };
    let star = optimal_mixture(&kv, &pa, &pb).map_err(|e| e.to_string())?;

    let value = |p: &Distribution| kv_value(p, &kv, &pa, &pb).map_err(|e| e.to_string());
    let rows: Vec<MixtureRow> = (0..graph.node_count() as u32)
        .map(|v| MixtureRow {
            label: graph.label(v).to_string(),
            coverage: pa.probs()[v as usize],
            popularity: pb.probs()[v as usize],
            mixture: star.probs()[v as usize],
        })
        .collect();

    let out = MixtureOut {
        lambda,
        divergence: divergence.to_string(),
        kv_coverage: value(&pa)?,
        kv_popularity: value(&pb)?,
        kv_mixture: value(&star)?,
        expected_coverage_uniform: expected_coverage(&pa, draws),
        expected_coverage_empirical: expected_coverage(&pb, draws),
        expected_coverage_mixture: expected_coverage(&star, draws),
        draws,
        rows,
    };
    serde_json::to_string_pretty(&out).map_err(|e| e.to_string())
}

/// Smoke surface for the page footer: quick per-discipline instance counts.
#[wasm_bindgen]
pub fn discipline_tally(corpus_jsonl: &str) -> Result<String, String> {
    let (corpus, _) = parse_corpus(corpus_jsonl, &DisciplineTaxonomy::default(), LoadMode::Strict)
        .map_err(|e| format!("corpus error: {e}"))?;
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for inst in corpus.instances() {
        *tally.entry(inst.discipline.clone()).or_insert(0) += 1;
    }
    serde_json::to_string_pretty(&tally).map_err(|e| e.to_string())
}
