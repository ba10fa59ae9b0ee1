//! End-to-end orchestration: consolidate → build-graph → sample-paths →
//! blend → select-seeds → synthesize → refine → filter.
//!
//! The orchestrator itself is single-threaded; stages parallelize
//! internally and hand results to each other exclusively through files
//! under `out_dir`, so every boundary is inspectable with standard text
//! tools and any stage can be resumed from its on-disk artifacts. A
//! `manifest.json` accumulates per-stage status, counts, timings, and
//! output digests; it is rewritten after every stage, so a failed run
//! records exactly where it stopped.
//!
//! The manifest's `config_hash` covers every semantically meaningful config
//! field — everything except `out_dir`, which only says where artifacts
//! land. With `resume`, a stage is reused iff the previous manifest carries
//! the same config hash and all of the stage's outputs still match their
//! recorded digests.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consolidation::{consolidate, ConsolidationConfig};
use crate::corpus::{load_corpus, save_corpus, DisciplineTaxonomy, LoadMode};
use crate::filters::{
    build_ngram_index, clean_records, run_filters,EmbeddingFilter, FilterConfig, FilterReason,
    HashingEmbedder, NgramIndex,
};
use crate::graph::{build_graph, load_graph, save_graph, KpGraph};
use crate::rng::RngStream;
use crate::sampling::{hybrid_blend, sample_paths, Path, Policy, WalkConfig};
use crate::selection::{AttributeDistribution, SeedGroup, SeedGroupRecord, SeedSelector};
use crate::synthesis::{
    refine_answers, synthesize_auto, BackendConfig, MockBackend, RoleAssigner, SynthRecord,
    SynthesisError, SynthesisOptions,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    ConfigInvalid(Vec<String>),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("backend failure in stage `{stage}`: {message}")]
    Backend { stage: String, message: String },
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Path-sampling stage settings: every length in `lengths` is sampled once
/// per policy at `per_length_total` paths, then blended with coverage
/// fraction `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalksConfig {
    pub lengths: Vec<usize>,
    pub per_length_total: usize,
    pub alpha: f64,
    pub max_length: usize,
    pub retry_factor: usize,
}

impl Default for WalksConfig {
    fn default() -> Self {
        Self { lengths: vec![1, 2, 3], per_length_total: 200, alpha: 0.5, max_length: 3, retry_factor: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// Synthesis + refinement stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisStageConfig {
    pub backend: BackendKind,
    pub config: BackendConfig,
    /// Share of groups synthesized as multiple-choice (rest are essays).
    pub mcq_fraction: f64,
    /// Fixed persona; absent means a per-group coin flip.
    pub role: Option<RoleAssigner>,
    pub gen_num_overrides: HashMap<usize, usize>,
    /// Run the answer-regeneration pass.
    pub refine: bool,
}

impl Default for SynthesisStageConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            config: BackendConfig::default(),
            mcq_fraction: 1.0,
            role: None,
            gen_num_overrides: HashMap::new(),
            refine: true,
        }
    }
}

/// Which embedder the similarity screen uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// Skip the embedding screen.
    None,
    /// Offline token-hashing embedder.
    Hashing,
    /// Remote embeddings endpoint (requires the `http` feature).
    Http { endpoint: String, model: String },
}

impl Default for EmbeddingKind {
    fn default() -> Self {
        EmbeddingKind::Hashing
    }
}

/// Filter stage settings. With no benchmark files, only the low-quality and
/// duplicate screens run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterStageConfig {
    pub benchmarks: Vec<PathBuf>,
    pub embedding: EmbeddingKind,
    #[serde(flatten)]
    pub config: FilterConfig,
}

/// Full pipeline configuration. One JSON file; every default matches the
/// reference values where one exists (α = 0.5, equal length quotas,
/// ρ_h = 0.10/0.15/0.25/0.25/0.25, temperature 0.6, top-p 0.95).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    /// Discipline taxonomy file (JSON array of labels); absent means the
    /// built-in 62-label taxonomy.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// `null` skips consolidation and feeds the corpus to the graph as-is.
    #[serde(default = "default_consolidation")]
    pub consolidation: Option<ConsolidationConfig>,
    #[serde(default)]
    pub walks: WalksConfig,
    #[serde(default = "AttributeDistribution::reference_difficulty")]
    pub difficulty_probs: [f64; 5],
    /// Target discipline law; absent means the corpus's empirical
    /// discipline distribution.
    #[serde(default)]
    pub discipline_probs: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub synthesis: SynthesisStageConfig,
    #[serde(default)]
    pub filter: FilterStageConfig,
}

fn default_consolidation() -> Option<ConsolidationConfig> {
    Some(ConsolidationConfig::default())
}

/// Hash of every semantically meaningful config field (everything except
/// `out_dir`), as lowercase SHA-256 hex of the canonical JSON encoding.
pub fn config_hash(config: &PipelineConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    value.as_object_mut().expect("config is an object").remove("out_dir");
    sha256_hex(value.to_string().as_bytes())
}

/// Parses and validates a config file, collecting every validation error
/// instead of stopping at the first.
pub fn load_config(path: &FsPath) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::ConfigInvalid(vec![format!("cannot read {}: {e}", path.display())]))?;
    let config: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| PipelineError::ConfigInvalid(vec![format!("config parse failed: {e}")]))?;
    validate_config(&config)?;
    Ok(config)
}

/// Checks every invariant the stages rely on; returns the full error list.
pub fn validate_config(config: &PipelineConfig) -> Result<(), PipelineError> {
    let mut errors = Vec::new();
    if !config.corpus.is_file() {
        errors.push(format!("corpus: no such file: {}", config.corpus.display()));
    }
    if let Some(taxonomy) = &config.taxonomy {
        if !taxonomy.is_file() {
            errors.push(format!("taxonomy: no such file: {}", taxonomy.display()));
        }
    }

    let w = &config.walks;
    if w.lengths.is_empty() {
        errors.push("walks.lengths: must name at least one walk length".into());
    }
    for &l in &w.lengths {
        if l < 1 || l > w.max_length {
            errors.push(format!("walks.lengths: {l} outside 1..={}", w.max_length));
        }
    }
    if w.per_length_total < 1 {
        errors.push("walks.per_length_total: must be >= 1".into());
    }
    if !(0.0..=1.0).contains(&w.alpha) {
        errors.push(format!("walks.alpha: {} outside [0, 1]", w.alpha));
    }

    check_simplex(&mut errors, "difficulty_probs", config.difficulty_probs.iter().copied());
    if let Some(probs) = &config.discipline_probs {
        if probs.is_empty() {
            errors.push("discipline_probs: must not be empty".into());
        } else {
            check_simplex(&mut errors, "discipline_probs", probs.values().copied());
        }
    }

    let s = &config.synthesis;
    if !(0.0..=1.0).contains(&s.mcq_fraction) {
        errors.push(format!("synthesis.mcq_fraction: {} outside [0, 1]", s.mcq_fraction));
    }
    if !(0.0..=2.0).contains(&s.config.temperature) {
        errors.push(format!("synthesis.config.temperature: {} outside [0, 2]", s.config.temperature));
    }
    if !(s.config.top_p > 0.0 && s.config.top_p <= 1.0) {
        errors.push(format!("synthesis.config.top_p: {} outside (0, 1]", s.config.top_p));
    }
    if s.config.max_in_flight < 1 {
        errors.push("synthesis.config.max_in_flight: must be >= 1".into());
    }
    if s.backend == BackendKind::Http {
        if s.config.endpoint.is_empty() {
            errors.push("synthesis.config.endpoint: required for the http backend".into());
        }
        if s.config.model.is_empty() {
            errors.push("synthesis.config.model: required for the http backend".into());
        }
        if !cfg!(feature = "http") {
            errors.push("synthesis.backend: this build has no `http` feature".into());
        }
    }

    let f = &config.filter;
    for path in &f.benchmarks {
        if !path.is_file() {
            errors.push(format!("filter.benchmarks: no such file: {}", path.display()));
        }
    }
    if f.config.ngram_n < 1 {
        errors.push("filter.ngram_n: must be >= 1".into());
    }
    if f.config.embed_threshold <= 0.0 {
        errors.push(format!("filter.embed_threshold: {} must be positive", f.config.embed_threshold));
    }
    if matches!(f.embedding, EmbeddingKind::Http { .. }) && !cfg!(feature = "http") {
        errors.push("filter.embedding: this build has no `http` feature".into());
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::ConfigInvalid(errors))
    }
}

fn check_simplex(errors: &mut Vec<String>, field: &str, probs: impl Iterator<Item = f64>) {
    let mut sum = 0.0;
    let mut negative = false;
    for p in probs {
        if !(p >= 0.0) || !p.is_finite() {
            negative = true;
        }
        sum += p;
    }
    if negative {
        errors.push(format!("{field}: entries must be finite and non-negative"));
    }
    if (sum - 1.0).abs() > 1e-9 {
        errors.push(format!("{field}: sums to {sum}, expected 1"));
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to `out_dir`.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// `completed`, `reused`, or `failed`.
    pub status: String,
    pub duration_ms: u64,
    pub counts: BTreeMap<String, u64>,
    pub outputs: Vec<OutputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// Stage names in execution order; `stop_after` must name one of these.
pub const STAGES: [&str; 8] = [
    "consolidate",
    "build-graph",
    "sample-paths",
    "blend",
    "select-seeds",
    "synthesize",
    "refine",
    "filter",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse stage outputs recorded by a previous manifest with the same
    /// config hash.
    pub resume: bool,
    /// Stop after the named stage.
    pub stop_after: Option<String>,
}

// ---------------------------------------------------------------------------
// Orchestrator
// ---------------------------------------------------------------------------

struct StageOutput {
    counts: BTreeMap<String, u64>,
    /// Paths relative to `out_dir`.
    outputs: Vec<String>,
}

enum StageFailure {
    Stage(String),
    Backend(String),
}

impl From<SynthesisError> for StageFailure {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Backend(_) => StageFailure::Backend(e.to_string()),
            other => StageFailure::Stage(other.to_string()),
        }
    }
}

/// Runs the pipeline; see the module doc for the stage chain. The returned
/// manifest is also persisted as `out_dir/manifest.json`.
pub fn run_pipeline(
    config: &PipelineConfig,
    options: &RunOptions,
) -> Result<Manifest, PipelineError> {
    validate_config(config)?;
    if let Some(stop) = &options.stop_after {
        if !STAGES.contains(&stop.as_str()) {
            return Err(PipelineError::ConfigInvalid(vec![format!(
                "stop_after: unknown stage `{stop}` (expected one of {})",
                STAGES.join(", ")
            )]));
        }
    }
    fs::create_dir_all(config.out_dir.join("paths")).map_err(|e| PipelineError::Stage {
        stage: "setup".into(),
        message: format!("cannot create output directory: {e}"),
    })?;

    let hash = config_hash(config);
    let previous: Option<Manifest> = if options.resume {
        fs::read_to_string(config.out_dir.join("manifest.json"))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .filter(|m: &Manifest| m.config_hash == hash)
    } else {
        None
    };
    let mut manifest = Manifest { config_hash: hash, seed: config.seed, stages: Vec::new() };

    let mut runner = Runner { config, previous, manifest: &mut manifest };
    for stage in STAGES {
        runner.run(stage)?;
        if options.stop_after.as_deref() == Some(stage) {
            break;
        }
    }
    Ok(manifest)
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    previous: Option<Manifest>,
    manifest: &'a mut Manifest,
}

impl Runner<'_> {
    fn run(&mut self, stage: &'static str) -> Result<(), PipelineError> {
        if let Some(record) = self.reusable(stage) {
            self.manifest.stages.push(record);
            self.persist(stage)?;
            return Ok(());
        }
        let started = Instant::now();
        let result = execute_stage(stage, self.config);
        let duration_ms = started.elapsed().as_millis() as u64;
        match result {
            Ok(output) => {
                let outputs = output
                    .outputs
                    .iter()
                    .map(|rel| {
                        let bytes = fs::read(self.config.out_dir.join(rel)).map_err(|e| {
                            PipelineError::Stage {
                                stage: stage.into(),
                                message: format!("declared output `{rel}` unreadable: {e}"),
                            }
                        })?;
                        Ok(OutputRecord { path: rel.clone(), sha256: sha256_hex(&bytes) })
                    })
                    .collect::<Result<Vec<_>, PipelineError>>()?;
                self.manifest.stages.push(StageRecord {
                    name: stage.into(),
                    status: "completed".into(),
                    duration_ms,
                    counts: output.counts,
                    outputs,
                    error: None,
                });
                self.persist(stage)
            }
            Err(failure) => {
                let (message, error) = match &failure {
                    StageFailure::Stage(m) | StageFailure::Backend(m) => (m.clone(), m.clone()),
                };
                self.manifest.stages.push(StageRecord {
                    name: stage.into(),
                    status: "failed".into(),
                    duration_ms,
                    counts: BTreeMap::new(),
                    outputs: Vec::new(),
                    error: Some(error),
                });
                self.persist(stage)?;
                Err(match failure {
                    StageFailure::Stage(_) => PipelineError::Stage { stage: stage.into(), message },
                    StageFailure::Backend(_) => {
                        PipelineError::Backend { stage: stage.into(), message }
                    }
                })
            }
        }
    }

    /// A stage is reusable when the previous run (same config hash)
    /// completed it and every declared output still matches its digest.
    fn reusable(&self, stage: &str) -> Option<StageRecord> {
        let prev = self.previous.as_ref()?.stage(stage)?;
        if prev.status != "completed" && prev.status != "reused" {
            return None;
        }
        for out in &prev.outputs {
            let bytes = fs::read(self.config.out_dir.join(&out.path)).ok()?;
            if sha256_hex(&bytes) != out.sha256 {
                return None;
            }
        }
        Some(StageRecord { status: "reused".into(), duration_ms: 0, ..prev.clone() })
    }

    fn persist(&self, stage: &str) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self.manifest).expect("manifest serializes");
        fs::write(self.config.out_dir.join("manifest.json"), text).map_err(|e| {
            PipelineError::Stage {
                stage: stage.into(),
                message: format!("cannot write manifest: {e}"),
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Seed-domain salts so no two stages share an RNG stream.
const WALK_SALT: u64 = 0x5741_4c4b;
const BLEND_SALT: u64 = 0x424c_4e44;
const SELECT_SALT: u64 = 0x5345_4c43;
const SYNTH_SALT: u64 = 0x5359_4e54;

fn stage_seed(seed: u64, salt: u64, index: u64) -> u64 {
    RngStream::substream(seed ^ salt, index).next_u64()
}

fn execute_stage(stage: &str, config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    match stage {
        "consolidate" => stage_consolidate(config),
        "build-graph" => stage_build_graph(config),
        "sample-paths" => stage_sample_paths(config),
        "blend" => stage_blend(config),
        "select-seeds" => stage_select_seeds(config),
        "synthesize" => stage_synthesize(config),
        "refine" => stage_refine(config),
        "filter" => stage_filter(config),
        other => Err(StageFailure::Stage(format!("unknown stage `{other}`"))),
    }
}

fn stage_err<E: std::fmt::Display>(e: E) -> StageFailure {
    StageFailure::Stage(e.to_string())
}

fn load_taxonomy(config: &PipelineConfig) -> Result<DisciplineTaxonomy, StageFailure> {
    match &config.taxonomy {
        Some(path) => DisciplineTaxonomy::from_file(path).map_err(stage_err),
        None => Ok(DisciplineTaxonomy::default()),
    }
}

/// Where the graph stage reads its corpus from.
fn effective_corpus_path(config: &PipelineConfig) -> PathBuf {
    if config.consolidation.is_some() {
        config.out_dir.join("corpus.consolidated.jsonl")
    } else {
        config.corpus.clone()
    }
}

/// Where the filter stage reads its records from.
fn effective_records_path(config: &PipelineConfig) -> &'static str {
    if config.synthesis.refine {
        "refined.jsonl"
    } else {
        "synth.jsonl"
    }
}

fn stage_consolidate(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let mut counts = BTreeMap::new();
    let Some(cons) = &config.consolidation else {
        counts.insert("enabled".into(), 0);
        return Ok(StageOutput { counts, outputs: vec![] });
    };
    let taxonomy = load_taxonomy(config)?;
    let (corpus, _) =
        load_corpus(&config.corpus, &taxonomy, LoadMode::Strict).map_err(stage_err)?;
    let (alias_map, rewritten) = consolidate(&corpus, cons, None).map_err(stage_err)?;
    alias_map.save(config.out_dir.join("alias_map.json")).map_err(stage_err)?;
    save_corpus(&rewritten, config.out_dir.join("corpus.consolidated.jsonl"))
        .map_err(stage_err)?;
    counts.insert("enabled".into(), 1);
    counts.insert("instances".into(), rewritten.len() as u64);
    counts.insert("aliases".into(), alias_map.mappings().len() as u64);
    counts.insert("clusters".into(), alias_map.clusters().len() as u64);
    Ok(StageOutput {
        counts,
        outputs: vec!["alias_map.json".into(), "corpus.consolidated.jsonl".into()],
    })
}

fn stage_build_graph(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let taxonomy = load_taxonomy(config)?;
    let (corpus, _) = load_corpus(&effective_corpus_path(config), &taxonomy, LoadMode::Strict)
        .map_err(stage_err)?;
    let graph = build_graph(&corpus).map_err(stage_err)?;
    save_graph(&graph, config.out_dir.join("graph.lkg")).map_err(stage_err)?;
    let mut counts = BTreeMap::new();
    counts.insert("nodes".into(), graph.node_count() as u64);
    counts.insert("edges".into(), graph.edge_count() as u64);
    counts.insert("instances".into(), graph.instance_count() as u64);
    Ok(StageOutput { counts, outputs: vec!["graph.lkg".into()] })
}

fn policy_file(policy: Policy, length: usize) -> String {
    let tag = match policy {
        Policy::Coverage => "coverage",
        Policy::Popularity => "popularity",
    };
    format!("paths/{tag}_l{length}.jsonl")
}

fn stage_sample_paths(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let graph = load_graph(&config.out_dir.join("graph.lkg")).map_err(stage_err)?;
    let mut counts = BTreeMap::new();
    let mut outputs = Vec::new();
    for (li, &length) in config.walks.lengths.iter().enumerate() {
        for (pi, policy) in [Policy::Coverage, Policy::Popularity].into_iter().enumerate() {
            let walk = WalkConfig {
                length,
                count: config.walks.per_length_total,
                policy,
                rng_seed: stage_seed(config.seed, WALK_SALT, (li * 2 + pi) as u64),
                max_length: config.walks.max_length,
                retry_factor: config.walks.retry_factor,
            };
            let set = sample_paths(&graph, &walk).map_err(stage_err)?;
            let rel = policy_file(policy, length);
            write_jsonl(&config.out_dir.join(&rel), &set.paths).map_err(stage_err)?;
            counts.insert(format!("{}", rel.trim_start_matches("paths/").trim_end_matches(".jsonl")), set.paths.len() as u64);
            if set.budget_exhausted {
                counts.insert(
                    format!(
                        "{}_budget_exhausted",
                        rel.trim_start_matches("paths/").trim_end_matches(".jsonl")
                    ),
                    1,
                );
            }
            outputs.push(rel);
        }
    }
    Ok(StageOutput { counts, outputs })
}

fn stage_blend(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let mut blended: Vec<Path> = Vec::new();
    let mut counts = BTreeMap::new();
    for (li, &length) in config.walks.lengths.iter().enumerate() {
        let pi_a: Vec<Path> =
            read_jsonl(&config.out_dir.join(policy_file(Policy::Coverage, length)))
                .map_err(stage_err)?;
        let pi_b: Vec<Path> =
            read_jsonl(&config.out_dir.join(policy_file(Policy::Popularity, length)))
                .map_err(stage_err)?;
        let mixed = hybrid_blend(
            &pi_a,
            &pi_b,
            config.walks.alpha,
            config.walks.per_length_total,
            stage_seed(config.seed, BLEND_SALT, li as u64),
        )
        .map_err(stage_err)?;
        counts.insert(format!("blended_l{length}"), mixed.len() as u64);
        blended.extend(mixed);
    }
    counts.insert("paths".into(), blended.len() as u64);
    counts.insert(
        "coverage_tagged".into(),
        blended.iter().filter(|p| p.policy == Policy::Coverage).count() as u64,
    );
    write_jsonl(&config.out_dir.join("paths/blended.jsonl"), &blended).map_err(stage_err)?;
    Ok(StageOutput { counts, outputs: vec!["paths/blended.jsonl".into()] })
}

/// The default ρ_s: the corpus's empirical discipline distribution.
fn empirical_discipline_probs(graph: &KpGraph) -> BTreeMap<String, f64> {
    let mut tallies: BTreeMap<String, u64> = BTreeMap::new();
    for meta in graph.instances() {
        *tallies.entry(graph.discipline_label(meta.discipline).to_string()).or_default() += 1;
    }
    let total = graph.instance_count() as f64;
    tallies.into_iter().map(|(label, n)| (label, n as f64 / total)).collect()
}

fn stage_select_seeds(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let graph = load_graph(&config.out_dir.join("graph.lkg")).map_err(stage_err)?;
    let paths: Vec<Path> =
        read_jsonl(&config.out_dir.join("paths/blended.jsonl")).map_err(stage_err)?;
    let discipline_probs = config
        .discipline_probs
        .clone()
        .unwrap_or_else(|| empirical_discipline_probs(&graph));
    let dist = AttributeDistribution::new(config.difficulty_probs, discipline_probs)
        .map_err(stage_err)?;
    let selector = SeedSelector::new(&graph);
    let groups = selector
        .build_seed_groups(&paths, &dist, stage_seed(config.seed, SELECT_SALT, 0))
        .map_err(stage_err)?;
    let records: Vec<SeedGroupRecord> = groups.iter().map(SeedGroup::to_record).collect();
    write_jsonl(&config.out_dir.join("groups.jsonl"), &records).map_err(stage_err)?;
    let mut counts = BTreeMap::new();
    counts.insert("paths_in".into(), paths.len() as u64);
    counts.insert("groups".into(), groups.len() as u64);
    counts.insert(
        "zero_seed_groups".into(),
        groups.iter().filter(|g| g.seeds.is_empty()).count() as u64,
    );
    counts.insert("dedup_dropped".into(), (paths.len() - groups.len()) as u64);
    Ok(StageOutput { counts, outputs: vec!["groups.jsonl".into()] })
}

/// Rebuilds in-memory groups from the interchange records. The path policy
/// tag is not part of the record (it lives in the paths files), so a
/// neutral tag is used; synthesis only reads the seed ids and kps.
pub fn seed_groups_from_records(records: Vec<SeedGroupRecord>) -> Vec<SeedGroup> {
    records
        .into_iter()
        .map(|r| SeedGroup {
            path: Path { kps: r.kps, policy: Policy::Coverage, truncated: false },
            target_difficulty: r.target_h,
            target_discipline: r.target_s,
            seeds: r.seed_ids,
            skipped_nodes: r.skipped,
        })
        .collect()
}

fn make_backend(config: &PipelineConfig) -> Result<Box<dyn crate::synthesis::Backend>, StageFailure> {
    match config.synthesis.backend {
        BackendKind::Mock => Ok(Box::new(MockBackend::new())),
        #[cfg(feature = "http")]
        BackendKind::Http => {
            let backend = crate::synthesis::HttpBackend::new(&config.synthesis.config)
                .map_err(|e| StageFailure::Backend(e.to_string()))?;
            Ok(Box::new(backend))
        }
        #[cfg(not(feature = "http"))]
        BackendKind::Http => {
            Err(StageFailure::Backend("this build has no `http` feature".into()))
        }
    }
}

fn stage_synthesize(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let taxonomy = load_taxonomy(config)?;
    let (corpus, _) = load_corpus(&effective_corpus_path(config), &taxonomy, LoadMode::Strict)
        .map_err(stage_err)?;
    let groups = seed_groups_from_records(
        read_jsonl(&config.out_dir.join("groups.jsonl")).map_err(stage_err)?,
    );
    let backend = make_backend(config)?;
    let options = SynthesisOptions {
        mcq_fraction: config.synthesis.mcq_fraction,
        role: config.synthesis.role,
        rng_seed: stage_seed(config.seed, SYNTH_SALT, 0),
        gen_num_overrides: config.synthesis.gen_num_overrides.clone(),
    };
    let output =
        synthesize_auto(&groups, &corpus, backend.as_ref(), &config.synthesis.config, &options)?;
    write_jsonl(&config.out_dir.join("synth.jsonl"), &output.records).map_err(stage_err)?;
    write_jsonl(&config.out_dir.join("synth.rejected.jsonl"), &output.rejected)
        .map_err(stage_err)?;
    let mut counts = BTreeMap::new();
    counts.insert("groups_in".into(), groups.len() as u64);
    counts.insert("records".into(), output.records.len() as u64);
    counts.insert("rejected".into(), output.rejected.len() as u64);
    Ok(StageOutput {
        counts,
        outputs: vec!["synth.jsonl".into(), "synth.rejected.jsonl".into()],
    })
}

fn stage_refine(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let mut counts = BTreeMap::new();
    if !config.synthesis.refine {
        counts.insert("enabled".into(), 0);
        return Ok(StageOutput { counts, outputs: vec![] });
    }
    let records: Vec<SynthRecord> =
        read_jsonl(&config.out_dir.join("synth.jsonl")).map_err(stage_err)?;
    let backend = make_backend(config)?;
    let output = refine_answers(&records, backend.as_ref(), &config.synthesis.config)?;
    write_jsonl(&config.out_dir.join("refined.jsonl"), &output.records).map_err(stage_err)?;
    write_jsonl(&config.out_dir.join("refined.rejected.jsonl"), &output.rejected)
        .map_err(stage_err)?;
    counts.insert("enabled".into(), 1);
    counts.insert("records".into(), output.records.len() as u64);
    counts.insert("rejected".into(), output.rejected.len() as u64);
    Ok(StageOutput {
        counts,
        outputs: vec!["refined.jsonl".into(), "refined.rejected.jsonl".into()],
    })
}

fn stage_filter(config: &PipelineConfig) -> Result<StageOutput, StageFailure> {
    let records: Vec<SynthRecord> =
        read_jsonl(&config.out_dir.join(effective_records_path(config))).map_err(stage_err)?;

    let index: Option<NgramIndex> = if config.filter.benchmarks.is_empty() {
        None
    } else {
        Some(build_ngram_index(&config.filter.benchmarks, config.filter.config.ngram_n)
            .map_err(stage_err)?)
    };

    let benchmark_lines: Vec<String> = config
        .filter
        .benchmarks
        .iter()
        .map(fs::read_to_string)
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage_err)?
        .iter()
        .flat_map(|text| text.lines())
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();

    let hashing = HashingEmbedder;
    #[cfg(feature = "http")]
    let http_embedder;
    let embedder: Option<&dyn crate::filters::Embedder> = match &config.filter.embedding {
        EmbeddingKind::None => None,
        EmbeddingKind::Hashing => Some(&hashing),
        #[cfg(feature = "http")]
        EmbeddingKind::Http { endpoint, model } => {
            http_embedder = crate::filters::HttpEmbedder::new(
                endpoint,
                model,
                &config.synthesis.config.api_key_env,
                config.synthesis.config.timeout_secs,
            )
            .map_err(|e| StageFailure::Backend(e.to_string()))?;
            Some(&http_embedder)
        }
        #[cfg(not(feature = "http"))]
        EmbeddingKind::Http { .. } => {
            return Err(StageFailure::Backend("this build has no `http` feature".into()));
        }
    };
    let embedding_filter = match embedder {
        Some(embedder) if !benchmark_lines.is_empty() => Some(
            EmbeddingFilter::new(embedder, &benchmark_lines, config.filter.config.embed_threshold)
                .map_err(|e| StageFailure::Backend(e.to_string()))?,
        ),
        _ => None,
    };

    let verdicts = run_filters(&records, index.as_ref(), embedding_filter.as_ref(), &config.filter.config);
    let clean = clean_records(&records, &verdicts);
    write_jsonl(&config.out_dir.join("clean.jsonl"), &clean).map_err(stage_err)?;
    write_jsonl(&config.out_dir.join("verdicts.jsonl"), &verdicts).map_err(stage_err)?;

    let mut counts = BTreeMap::new();
    counts.insert("records_in".into(), records.len() as u64);
    counts.insert("passed".into(), clean.len() as u64);
    for (reason, key) in [
        (FilterReason::NonParsable, "non_parsable"),
        (FilterReason::TooShort, "too_short"),
        (FilterReason::NgramContamination, "ngram_contamination"),
        (FilterReason::EmbeddingContamination, "embedding_contamination"),
        (FilterReason::DuplicateOfOutput, "duplicate_of_output"),
    ] {
        let n = verdicts.iter().filter(|v| v.reasons.contains(&reason)).count() as u64;
        if n > 0 {
            counts.insert(key.into(), n);
        }
    }
    Ok(StageOutput { counts, outputs: vec!["clean.jsonl".into(), "verdicts.jsonl".into()] })
}

// ---------------------------------------------------------------------------
// JSONL plumbing
// ---------------------------------------------------------------------------

/// Writes one compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &FsPath, items: &[T]) -> Result<(), String> {
    let mut out = String::new();
    for item in items {
        out.push_str(
            &serde_json::to_string(item).map_err(|e| format!("serialize for {}: {e}", path.display()))?,
        );
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| format!("write {}: {e}", path.display()))
}

/// Reads a JSONL file, skipping blank lines; errors name the line.
pub fn read_jsonl<T: DeserializeOwned>(path: &FsPath) -> Result<Vec<T>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("read {}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
