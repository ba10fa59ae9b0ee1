//! Command-line front end for the linksyn library.
//!
//! One subcommand per pipeline stage plus `run` (full pipeline from a JSON
//! config) and `report-similarity`. Exit codes: 0 success, 1 validation
//! failure (bad flags, unreadable or malformed inputs), 2 stage failure,
//! 3 backend failure. API credentials are only ever read from the
//! environment variable named by `--api-key-env` / the config file — there
//! is deliberately no flag that accepts the credential itself.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use linksyn::consolidation::{consolidate, ConsolidationConfig};
use linksyn::corpus::{load_corpus, save_corpus, Corpus, DisciplineTaxonomy, LoadMode};
use linksyn::filters::{
    build_ngram_index, clean_records, run_filters, similarity_report, Embedder, EmbeddingFilter,
    FilterConfig, HashingEmbedder,
};
use linksyn::graph::{build_graph, compute_stats, estimate_diameter, load_graph, save_graph};
use linksyn::pipeline::{
    load_config, read_jsonl, run_pipeline, seed_groups_from_records, write_jsonl, PipelineError,
    RunOptions,
};
use linksyn::rng::RngStream;
use linksyn::sampling::{hybrid_blend, sample_paths, Path as KpPath, Policy, SamplingError, WalkConfig};
use linksyn::selection::{AttributeDistribution, SeedGroup, SeedGroupRecord, SeedSelector};
use linksyn::synthesis::{
    refine_answers, synthesize_auto, Backend, BackendConfig, MockBackend, RoleAssigner,
    SynthRecord, SynthesisError, SynthesisOptions,
};

/// Knowledge-point-graph data synthesis pipeline.
#[derive(Debug, Parser)]
#[command(name = "linksyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge near-duplicate KP labels and rewrite the corpus.
    Consolidate(ConsolidateArgs),
    /// Build the co-occurrence graph from a corpus.
    BuildGraph(BuildGraphArgs),
    /// Print summary statistics for a graph file as JSON.
    Stats(StatsArgs),
    /// Sample KP paths by random walk.
    SamplePaths(SamplePathsArgs),
    /// Draw target attributes and select seed instances per path.
    SelectSeeds(SelectSeedsArgs),
    /// Generate QA records from seed groups through a completion backend.
    Synthesize(SynthesizeArgs),
    /// Re-derive every record's answer through the regenerator prompt.
    Refine(RefineArgs),
    /// Screen records for contamination, duplicates, and low quality.
    Filter(FilterArgs),
    /// Run the whole pipeline from a JSON config file.
    Run(RunArgs),
    /// Summarize cosine similarity between records and their seeds.
    ReportSimilarity(ReportSimilarityArgs),
}

#[derive(Debug, Args)]
struct ConsolidateArgs {
    /// Corpus to consolidate (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the alias map (JSON).
    #[arg(long)]
    out_map: PathBuf,
    /// Where to write the rewritten corpus (JSONL).
    #[arg(long)]
    out_corpus: PathBuf,
    /// Surface-form bucketing prefix length.
    #[arg(long, default_value_t = 3)]
    prefix_len: usize,
    /// Co-occurrence profile merge threshold.
    #[arg(long, default_value_t = 0.9)]
    cosine_threshold: f64,
    /// Discipline taxonomy file; built-in 62-label list when absent.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    /// Corpus to index (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Where to write the graph file.
    #[arg(long)]
    out: PathBuf,
    /// Discipline taxonomy file; built-in 62-label list when absent.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Graph file to describe.
    #[arg(long)]
    graph: PathBuf,
    /// Include a sampled double-sweep BFS diameter estimate.
    #[arg(long)]
    estimate_diameter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Coverage,
    Popularity,
    /// Blend of both: `round(alpha * count)` coverage paths, rest popularity.
    Hybrid,
}

#[derive(Debug, Args)]
struct SamplePathsArgs {
    /// Graph file to walk.
    #[arg(long)]
    graph: PathBuf,
    /// Start/transition law.
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Coverage fraction for the hybrid policy.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Path length (number of nodes, 1..=3).
    #[arg(long)]
    length: usize,
    /// Number of unique paths to sample.
    #[arg(long)]
    count: usize,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the paths (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectSeedsArgs {
    /// Graph file the paths were sampled from.
    #[arg(long)]
    graph: PathBuf,
    /// Sampled paths (JSONL).
    #[arg(long)]
    paths: PathBuf,
    /// Target difficulty law ρ_h as five comma-separated probabilities.
    #[arg(long, default_value = "0.10,0.15,0.25,0.25,0.25")]
    difficulty: String,
    /// Target discipline law ρ_s as a JSON object file
    /// (`{"label": prob, ...}`); the corpus's empirical law when absent.
    #[arg(long)]
    discipline_dist: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the seed groups (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TemplateArg {
    Mcq,
    Essay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    /// Deterministic offline backend for smoke runs and tests.
    Mock,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

/// Backend flags shared by `synthesize` and `refine`.
#[derive(Debug, Args)]
struct BackendArgs {
    /// Completion backend.
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// Chat completions URL (http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name (http backend).
    #[arg(long)]
    model: Option<String>,
    /// Maximum in-flight requests.
    #[arg(long, default_value_t = 8)]
    concurrency: usize,
    /// Name of the environment variable holding the API credential.
    #[arg(long, default_value = "LINKSYN_API_KEY")]
    api_key_env: String,
}

impl BackendArgs {
    fn config(&self) -> Result<BackendConfig, CliError> {
        let mut config = BackendConfig::default();
        config.max_in_flight = self.concurrency;
        config.api_key_env = self.api_key_env.clone();
        if self.backend == BackendArg::Http {
            config.endpoint = self
                .endpoint
                .clone()
                .ok_or_else(|| CliError::Validation(anyhow!("--endpoint is required with --backend http")))?;
            config.model = self
                .model
                .clone()
                .ok_or_else(|| CliError::Validation(anyhow!("--model is required with --backend http")))?;
        }
        Ok(config)
    }

    fn build(&self, config: &BackendConfig) -> Result<Box<dyn Backend>, CliError> {
        match self.backend {
            BackendArg::Mock => Ok(Box::new(MockBackend::new())),
            #[cfg(feature = "http")]
            BackendArg::Http => {
                let backend = linksyn::synthesis::HttpBackend::new(config)
                    .map_err(|e| CliError::Backend(anyhow!(e)))?;
                Ok(Box::new(backend))
            }
            #[cfg(not(feature = "http"))]
            BackendArg::Http => Err(CliError::Validation(anyhow!(
                "this build has no `http` feature; rebuild with --features http"
            ))),
        }
    }
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    /// Seed groups (JSONL).
    #[arg(long)]
    groups: PathBuf,
    /// Corpus the seed ids refer to (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Question format for every group.
    #[arg(long, value_enum)]
    template: TemplateArg,
    #[command(flatten)]
    backend: BackendArgs,
    /// Fixed persona; a per-group coin flip when absent.
    #[arg(long)]
    role: Option<String>,
    /// RNG seed for per-group prompt-variant draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Discipline taxonomy file; built-in 62-label list when absent.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Where to write accepted records (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Quarantine file; defaults to `<out>.rejected.jsonl`.
    #[arg(long)]
    rejected: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Records to refine (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Where to write refined records (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Quarantine file; defaults to `<out>.rejected.jsonl`.
    #[arg(long)]
    rejected: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Records to screen (JSONL).
    #[arg(long = "in")]
    input: PathBuf,
    /// Benchmark files or directories of them; no contamination screens
    /// run when absent.
    #[arg(long)]
    benchmarks: Vec<PathBuf>,
    /// Contamination window length in tokens.
    #[arg(long, default_value_t = 10)]
    ngram: usize,
    /// Embeddings URL; the offline token-hashing embedder when absent.
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Embeddings model name (with --embed-endpoint).
    #[arg(long)]
    embed_model: Option<String>,
    /// Cosine threshold for the embedding screen.
    #[arg(long, default_value_t = 0.95)]
    embed_threshold: f64,
    /// Skip the embedding screen entirely.
    #[arg(long)]
    no_embed: bool,
    /// Name of the environment variable holding the API credential.
    #[arg(long, default_value = "LINKSYN_API_KEY")]
    api_key_env: String,
    /// Where to write surviving records (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Where to write per-record verdicts (JSONL).
    #[arg(long)]
    verdicts: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Reuse stage outputs recorded by a previous manifest with the same
    /// config hash.
    #[arg(long)]
    resume: bool,
    /// Stop after the named stage.
    #[arg(long)]
    stop_after: Option<String>,
}

#[derive(Debug, Args)]
struct ReportSimilarityArgs {
    /// Seed groups the records were synthesized from (JSONL).
    #[arg(long)]
    groups: PathBuf,
    /// Synthesized records (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Corpus the seed ids refer to (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Discipline taxonomy file; built-in 62-label list when absent.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

/// Error classed by exit code.
enum CliError {
    /// Exit 1: bad flags or malformed/missing inputs.
    Validation(anyhow::Error),
    /// Exit 2: a stage failed mid-computation.
    Stage(anyhow::Error),
    /// Exit 3: a completion or embeddings backend failed.
    Backend(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Validation(e) | CliError::Stage(e) | CliError::Backend(e) => e,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::ConfigInvalid(_) => CliError::Validation(anyhow!(e)),
            PipelineError::Stage { .. } => CliError::Stage(anyhow!(e)),
            PipelineError::Backend { .. } => CliError::Backend(anyhow!(e)),
        }
    }
}

impl From<SynthesisError> for CliError {
    // `anyhow!("{e}")` rather than `anyhow!(e)`: the Display text already
    // embeds the cause, so keeping the source chain would print it twice.
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Backend(_) => CliError::Backend(anyhow!("{e}")),
            other => CliError::Stage(anyhow!("{other}")),
        }
    }
}

/// Input-reading problems are validation failures.
fn validation<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Validation(e.into())
}

/// Output-writing and mid-stage problems are stage failures.
fn stage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Stage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful exits; real parse errors are
            // validation failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Consolidate(args) => cmd_consolidate(args),
        Command::BuildGraph(args) => cmd_build_graph(args),
        Command::Stats(args) => cmd_stats(args),
        Command::SamplePaths(args) => cmd_sample_paths(args),
        Command::SelectSeeds(args) => cmd_select_seeds(args),
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Refine(args) => cmd_refine(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Run(args) => cmd_run(args),
        Command::ReportSimilarity(args) => cmd_report_similarity(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Prints a document to stdout, swallowing broken pipes so `stats | head`
/// behaves like any other unix command.
fn print_doc(text: &str) -> Result<(), CliError> {
    match writeln!(io::stdout(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(stage),
    }
}

fn read_taxonomy(path: &Option<PathBuf>) -> Result<DisciplineTaxonomy, CliError> {
    match path {
        Some(p) => DisciplineTaxonomy::from_file(p).map_err(validation),
        None => Ok(DisciplineTaxonomy::default()),
    }
}

fn read_corpus(path: &Path, taxonomy: &DisciplineTaxonomy) -> Result<Corpus, CliError> {
    let (corpus, _) = load_corpus(path, taxonomy, LoadMode::Strict)
        .map_err(|e| validation(anyhow!("{}: {e}", path.display())))?;
    Ok(corpus)
}

fn rejected_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
        out.with_file_name(format!("{stem}.rejected.jsonl"))
    })
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_consolidate(args: ConsolidateArgs) -> Result<(), CliError> {
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let corpus = read_corpus(&args.corpus, &taxonomy)?;
    let config = ConsolidationConfig {
        prefix_len: args.prefix_len,
        cosine_threshold: args.cosine_threshold,
        ..ConsolidationConfig::default()
    };
    let (alias_map, rewritten) = consolidate(&corpus, &config, None).map_err(stage)?;
    alias_map.save(&args.out_map).map_err(stage)?;
    save_corpus(&rewritten, &args.out_corpus).map_err(stage)?;
    eprintln!(
        "consolidated {} labels into {} clusters",
        alias_map.mappings().len(),
        alias_map.clusters().len()
    );
    Ok(())
}

fn cmd_build_graph(args: BuildGraphArgs) -> Result<(), CliError> {
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let corpus = read_corpus(&args.corpus, &taxonomy)?;
    let graph = build_graph(&corpus).map_err(stage)?;
    save_graph(&graph, &args.out).map_err(stage)?;
    eprintln!(
        "graph: {} nodes, {} edges, {} instances",
        graph.node_count(),
        graph.edge_count(),
        graph.instance_count()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph).map_err(validation)?;
    let mut stats = compute_stats(&graph);
    if args.estimate_diameter {
        stats.diameter_estimate = Some(estimate_diameter(&graph, 8, 0));
    }
    print_doc(&serde_json::to_string_pretty(&stats).map_err(stage)?)?;
    Ok(())
}

fn cmd_sample_paths(args: SamplePathsArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph).map_err(validation)?;
    let walk = |policy: Policy, rng_seed: u64| -> Result<Vec<KpPath>, CliError> {
        let config = WalkConfig {
            length: args.length,
            count: args.count,
            policy,
            rng_seed,
            max_length: 3,
            retry_factor: 20,
        };
        let set = sample_paths(&graph, &config).map_err(sampling_error)?;
        if set.budget_exhausted {
            eprintln!(
                "warning: retry budget exhausted for {policy:?}; got {} of {} paths",
                set.paths.len(),
                args.count
            );
        }
        Ok(set.paths)
    };
    let paths = match args.policy {
        PolicyArg::Coverage => walk(Policy::Coverage, args.seed)?,
        PolicyArg::Popularity => walk(Policy::Popularity, args.seed)?,
        // Both laws get their own derived stream; the blend draw gets a
        // third, so hybrid output is reproducible from --seed alone.
        PolicyArg::Hybrid => {
            let pi_a = walk(Policy::Coverage, RngStream::substream(args.seed, 0).next_u64())?;
            let pi_b = walk(Policy::Popularity, RngStream::substream(args.seed, 1).next_u64())?;
            hybrid_blend(
                &pi_a,
                &pi_b,
                args.alpha,
                args.count,
                RngStream::substream(args.seed, 2).next_u64(),
            )
            .map_err(sampling_error)?
        }
    };
    write_jsonl(&args.out, &paths).map_err(|e| stage(anyhow!(e)))?;
    eprintln!("wrote {} paths", paths.len());
    Ok(())
}

fn sampling_error(e: SamplingError) -> CliError {
    match e {
        SamplingError::InvalidConfig(_) => validation(e),
        other => stage(other),
    }
}

fn parse_difficulty(text: &str) -> Result<[f64; 5], CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| validation(anyhow!("--difficulty: {e}")))?;
    let arr: [f64; 5] = parts
        .try_into()
        .map_err(|v: Vec<f64>| validation(anyhow!("--difficulty: expected 5 values, got {}", v.len())))?;
    Ok(arr)
}

fn cmd_select_seeds(args: SelectSeedsArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph).map_err(validation)?;
    let paths: Vec<KpPath> =
        read_jsonl(&args.paths).map_err(|e| validation(anyhow!(e)))?;
    let difficulty = parse_difficulty(&args.difficulty)?;
    let disciplines: BTreeMap<String, f64> = match &args.discipline_dist {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("--discipline-dist: {}", path.display()))
                .map_err(validation)?;
            serde_json::from_str(&text)
                .map_err(|e| validation(anyhow!("--discipline-dist: {e}")))?
        }
        None => {
            let mut tallies: BTreeMap<String, u64> = BTreeMap::new();
            for meta in graph.instances() {
                *tallies
                    .entry(graph.discipline_label(meta.discipline).to_string())
                    .or_default() += 1;
            }
            let total = graph.instance_count() as f64;
            tallies.into_iter().map(|(label, n)| (label, n as f64 / total)).collect()
        }
    };
    let dist = AttributeDistribution::new(difficulty, disciplines).map_err(validation)?;
    let selector = SeedSelector::new(&graph);
    let groups = selector.build_seed_groups(&paths, &dist, args.seed).map_err(stage)?;
    let records: Vec<SeedGroupRecord> = groups.iter().map(SeedGroup::to_record).collect();
    write_jsonl(&args.out, &records).map_err(|e| stage(anyhow!(e)))?;
    eprintln!("wrote {} seed groups ({} paths in)", groups.len(), paths.len());
    Ok(())
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<(), CliError> {
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let corpus = read_corpus(&args.corpus, &taxonomy)?;
    let groups = seed_groups_from_records(
        read_jsonl(&args.groups).map_err(|e| validation(anyhow!(e)))?,
    );
    let config = args.backend.config()?;
    let backend = args.backend.build(&config)?;
    let role = match args.role.as_deref() {
        None => None,
        Some("college") => Some(RoleAssigner::College),
        Some("graduate") => Some(RoleAssigner::Graduate),
        Some(other) => {
            return Err(validation(anyhow!(
                "--role: expected `college` or `graduate`, got `{other}`"
            )))
        }
    };
    let options = SynthesisOptions {
        mcq_fraction: match args.template {
            TemplateArg::Mcq => 1.0,
            TemplateArg::Essay => 0.0,
        },
        role,
        rng_seed: args.seed,
        ..SynthesisOptions::default()
    };
    let output = synthesize_auto(&groups, &corpus, backend.as_ref(), &config, &options)?;
    write_jsonl(&args.out, &output.records).map_err(|e| stage(anyhow!(e)))?;
    write_jsonl(&rejected_path(&args.out, &args.rejected), &output.rejected)
        .map_err(|e| stage(anyhow!(e)))?;
    eprintln!(
        "wrote {} records ({} groups quarantined)",
        output.records.len(),
        output.rejected.len()
    );
    Ok(())
}

fn cmd_refine(args: RefineArgs) -> Result<(), CliError> {
    let records: Vec<SynthRecord> =
        read_jsonl(&args.input).map_err(|e| validation(anyhow!(e)))?;
    let config = args.backend.config()?;
    let backend = args.backend.build(&config)?;
    let output = refine_answers(&records, backend.as_ref(), &config)?;
    write_jsonl(&args.out, &output.records).map_err(|e| stage(anyhow!(e)))?;
    write_jsonl(&rejected_path(&args.out, &args.rejected), &output.rejected)
        .map_err(|e| stage(anyhow!(e)))?;
    eprintln!(
        "refined {} records ({} quarantined)",
        output.records.len(),
        output.rejected.len()
    );
    Ok(())
}

/// Expands directories to their contained files, sorted by name.
fn expand_benchmarks(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(path)
                .map_err(|e| validation(anyhow!("--benchmarks: {}: {e}", path.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(validation(anyhow!("--benchmarks: no such path: {}", path.display())));
        }
    }
    Ok(files)
}

fn cmd_filter(args: FilterArgs) -> Result<(), CliError> {
    let records: Vec<SynthRecord> =
        read_jsonl(&args.input).map_err(|e| validation(anyhow!(e)))?;
    let benchmarks = expand_benchmarks(&args.benchmarks)?;

    let config = FilterConfig { ngram_n: args.ngram, embed_threshold: args.embed_threshold, ..FilterConfig::default() };
    let index = if benchmarks.is_empty() {
        None
    } else {
        Some(build_ngram_index(&benchmarks, config.ngram_n).map_err(stage)?)
    };

    let benchmark_lines: Vec<String> = benchmarks
        .iter()
        .map(fs::read_to_string)
        .collect::<Result<Vec<_>, _>>()
        .map_err(validation)?
        .iter()
        .flat_map(|text| text.lines())
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();

    let hashing = HashingEmbedder;
    #[cfg(feature = "http")]
    let http_embedder;
    let embedder: Option<&dyn Embedder> = if args.no_embed {
        None
    } else {
        match &args.embed_endpoint {
            None => Some(&hashing),
            #[cfg(feature = "http")]
            Some(endpoint) => {
                let model = args.embed_model.as_deref().ok_or_else(|| {
                    validation(anyhow!("--embed-model is required with --embed-endpoint"))
                })?;
                http_embedder =
                    linksyn::filters::HttpEmbedder::new(endpoint, model, &args.api_key_env, 120)
                        .map_err(|e| CliError::Backend(anyhow!(e)))?;
                Some(&http_embedder)
            }
            #[cfg(not(feature = "http"))]
            Some(_) => {
                return Err(validation(anyhow!(
                    "this build has no `http` feature; rebuild with --features http"
                )))
            }
        }
    };
    let embedding_filter = match embedder {
        Some(embedder) if !benchmark_lines.is_empty() => Some(
            EmbeddingFilter::new(embedder, &benchmark_lines, config.embed_threshold)
                .map_err(|e| CliError::Backend(anyhow!(e)))?,
        ),
        _ => None,
    };

    let verdicts = run_filters(&records, index.as_ref(), embedding_filter.as_ref(), &config);
    let clean = clean_records(&records, &verdicts);
    write_jsonl(&args.out, &clean).map_err(|e| stage(anyhow!(e)))?;
    write_jsonl(&args.verdicts, &verdicts).map_err(|e| stage(anyhow!(e)))?;
    eprintln!("{} of {} records passed", clean.len(), records.len());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let options = RunOptions { resume: args.resume, stop_after: args.stop_after };
    let manifest = run_pipeline(&config, &options)?;
    print_doc(&serde_json::to_string_pretty(&manifest).map_err(stage)?)?;
    Ok(())
}

fn cmd_report_similarity(args: ReportSimilarityArgs) -> Result<(), CliError> {
    let taxonomy = read_taxonomy(&args.taxonomy)?;
    let corpus = read_corpus(&args.corpus, &taxonomy)?;
    let groups = seed_groups_from_records(
        read_jsonl(&args.groups).map_err(|e| validation(anyhow!(e)))?,
    );
    let records: Vec<SynthRecord> =
        read_jsonl(&args.records).map_err(|e| validation(anyhow!(e)))?;
    let report = similarity_report(&groups, &records, &corpus, &HashingEmbedder)
        .map_err(|e| CliError::Backend(anyhow!(e)))?;
    print_doc(&serde_json::to_string_pretty(&report).map_err(stage)?)?;
    Ok(())
}
