//! Post-synthesis decontamination and quality filtering.
//!
//! Three independent screens produce one [`FilterVerdict`] per record:
//! exact n-gram benchmark matching (see [`ngram`]), embedding-similarity
//! screening (see [`embed`]), and basic low-quality rules (minimum token
//! counts, schema validity, exact-duplicate suppression). A record passes
//! iff it accumulates no reasons; an unavailable embedder downgrades that
//! screen to a warning rather than silently passing or failing records.
//!
//! Verdicts are a pure function of the record set: permuting the input
//! permutes the verdicts identically (duplicate suppression keeps the
//! lexicographically smallest record id, not the first seen).

pub mod embed;
pub mod ngram;

use std::collections::HashMap;

use crate::par::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::selection::SeedGroup;
use crate::synthesis::{group_label, validate_record, SynthRecord};

pub use embed::{Embedder, EmbedderError, Embedding, HashingEmbedder};
pub use ngram::{
    build_ngram_index, expand_benchmark_paths, tokenize, NgramIndex, TOKENIZER_VERSION,
};

#[cfg(feature = "http")]
pub use embed::HttpEmbedder;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("index built with tokenizer `{found}` but this build uses `{expected}`")]
    TokenizerMismatch { found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why a record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterReason {
    NonParsable,
    TooShort,
    NgramContamination,
    EmbeddingContamination,
    DuplicateOfOutput,
}

/// Outcome of all screens for one record. `passed` holds iff `reasons` is
/// empty; `warnings` records screens that could not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub record_id: String,
    pub passed: bool,
    pub reasons: Vec<FilterReason>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FilterVerdict {
    fn new(record_id: String, reasons: Vec<FilterReason>, warnings: Vec<String>) -> Self {
        Self { record_id, passed: reasons.is_empty(), reasons, warnings }
    }
}

/// Verdict for an input line that did not parse as a record at all.
pub fn nonparsable_verdict(line_number: usize) -> FilterVerdict {
    FilterVerdict::new(format!("line-{line_number}"), vec![FilterReason::NonParsable], vec![])
}

/// Thresholds for the low-quality rules and the embedding screen. The
/// embedding threshold is a repository default — the reference pipeline
/// names none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub ngram_n: usize,
    pub embed_threshold: f64,
    pub min_question_tokens: usize,
    pub min_answer_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { ngram_n: 10, embed_threshold: 0.95, min_question_tokens: 5, min_answer_tokens: 1 }
    }
}

/// The text a record exposes to contamination screens: question plus answer.
pub fn record_filter_text(record: &SynthRecord) -> String {
    format!("{} {}", record.question, record.answer)
}

/// N-gram screen: true iff any normalized window of the record text is a
/// verified benchmark gram.
pub fn check_contamination(record: &SynthRecord, index: &NgramIndex) -> bool {
    index.contaminated(&record_filter_text(record))
}

/// Embedding screen: true iff the maximum cosine against any benchmark
/// embedding reaches `threshold`.
pub fn check_embedding(
    record: &SynthRecord,
    benchmark_embeddings: &[Embedding],
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<bool, EmbedderError> {
    let e = embedder.embed(&record_filter_text(record))?;
    Ok(benchmark_embeddings.iter().any(|b| e.cosine(b) >= threshold))
}

/// Embedding screen inputs bundled for [`run_filters`].
pub struct EmbeddingFilter<'a> {
    pub embedder: &'a dyn Embedder,
    pub benchmark_embeddings: Vec<Embedding>,
    pub threshold: f64,
}

impl<'a> EmbeddingFilter<'a> {
    /// Embeds benchmark texts up front.
    pub fn new(
        embedder: &'a dyn Embedder,
        benchmark_texts: &[String],
        threshold: f64,
    ) -> Result<Self, EmbedderError> {
        let benchmark_embeddings = benchmark_texts
            .iter()
            .map(|t| embedder.embed(t))
            .collect::<Result<_, _>>()?;
        Ok(Self { embedder, benchmark_embeddings, threshold })
    }
}

/// Runs every screen over the records, in input order. Screens are stateless
/// per record and run in parallel; duplicate grouping is computed from
/// content alone, so verdicts do not depend on input order.
pub fn run_filters(
    records: &[SynthRecord],
    index: Option<&NgramIndex>,
    embedding: Option<&EmbeddingFilter<'_>>,
    config: &FilterConfig,
) -> Vec<FilterVerdict> {
    // Content key → winning (smallest) record id among exact duplicates.
    let mut winners: HashMap<(&str, Option<&Vec<String>>, &str), &str> = HashMap::new();
    for r in records {
        let key = (r.question.as_str(), r.options.as_ref(), r.answer.as_str());
        winners
            .entry(key)
            .and_modify(|w| {
                if r.id.as_str() < *w {
                    *w = r.id.as_str();
                }
            })
            .or_insert(r.id.as_str());
    }

    records
        .par_iter()
        .map(|record| {
            let mut reasons = Vec::new();
            let mut warnings = Vec::new();
            if validate_record(record).is_err() {
                reasons.push(FilterReason::NonParsable);
            }
            if tokenize(&record.question).len() < config.min_question_tokens
                || tokenize(&record.answer).len() < config.min_answer_tokens
            {
                reasons.push(FilterReason::TooShort);
            }
            if let Some(index) = index {
                if check_contamination(record, index) {
                    reasons.push(FilterReason::NgramContamination);
                }
            }
            if let Some(filter) = embedding {
                match check_embedding(
                    record,
                    &filter.benchmark_embeddings,
                    filter.embedder,
                    filter.threshold,
                ) {
                    Ok(true) => reasons.push(FilterReason::EmbeddingContamination),
                    Ok(false) => {}
                    Err(e) => warnings.push(format!("embedding screen skipped: {e}")),
                }
            }
            let key = (record.question.as_str(), record.options.as_ref(), record.answer.as_str());
            if winners[&key] != record.id.as_str() {
                reasons.push(FilterReason::DuplicateOfOutput);
            }
            FilterVerdict::new(record.id.clone(), reasons, warnings)
        })
        .collect()
}

/// Records whose verdicts passed, preserving order. Panics if the slices
/// are not parallel (same length, same ids).
pub fn clean_records(records: &[SynthRecord], verdicts: &[FilterVerdict]) -> Vec<SynthRecord> {
    assert_eq!(records.len(), verdicts.len(), "records and verdicts must be parallel");
    records
        .iter()
        .zip(verdicts)
        .filter(|(r, v)| {
            assert_eq!(r.id, v.record_id, "records and verdicts must be parallel");
            v.passed
        })
        .map(|(r, _)| r.clone())
        .collect()
}

/// Aggregate similarity statistics: intra-group diversity of generated
/// records and per-record similarity back to the group's seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean over groups (≥2 records) of the mean pairwise cosine.
    pub mean_intra_group_cosine: Option<f64>,
    /// Mean over records of the maximum cosine to any seed of their group.
    pub mean_max_seed_similarity: Option<f64>,
    /// Mean over records of the minimum cosine to any seed of their group.
    pub mean_min_seed_similarity: Option<f64>,
    /// Groups contributing to the pairwise aggregate.
    pub group_count: usize,
    /// Groups excluded from the pairwise aggregate for having < 2 records.
    pub degenerate_group_count: usize,
    /// Records contributing to the seed-similarity aggregates.
    pub record_count: usize,
}

/// Computes [`SimilarityReport`] for records mapped to their groups via
/// provenance. Seed texts are resolved from the corpus; records of groups
/// with no seeds are skipped in the seed aggregates, and groups with fewer
/// than two records are skipped in the pairwise aggregate (counted).
pub fn similarity_report(
    groups: &[SeedGroup],
    records: &[SynthRecord],
    corpus: &Corpus,
    embedder: &dyn Embedder,
) -> Result<SimilarityReport, EmbedderError> {
    let group_of_label: HashMap<String, &SeedGroup> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (group_label(i), g))
        .collect();

    let mut by_group: HashMap<&str, Vec<&SynthRecord>> = HashMap::new();
    for r in records {
        by_group.entry(r.provenance.group_id.as_str()).or_default().push(r);
    }
    let mut labels: Vec<&str> = by_group.keys().copied().collect();
    labels.sort_unstable();

    let mut pairwise_means = Vec::new();
    let mut degenerate = 0usize;
    let mut max_sims = Vec::new();
    let mut min_sims = Vec::new();

    for label in labels {
        let group_records = &by_group[label];
        let embeddings: Vec<Embedding> = group_records
            .iter()
            .map(|r| embedder.embed(&record_filter_text(r)))
            .collect::<Result<_, _>>()?;

        if embeddings.len() >= 2 {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..embeddings.len() {
                for j in i + 1..embeddings.len() {
                    sum += embeddings[i].cosine(&embeddings[j]);
                    pairs += 1;
                }
            }
            pairwise_means.push(sum / pairs as f64);
        } else {
            degenerate += 1;
        }

        let Some(group) = group_of_label.get(label) else { continue };
        if group.seeds.is_empty() {
            continue;
        }
        let seed_embeddings: Vec<Embedding> = group
            .seeds
            .iter()
            .filter_map(|id| corpus.index_of(id))
            .map(|idx| embedder.embed(&corpus.instances()[idx as usize].text))
            .collect::<Result<_, _>>()?;
        if seed_embeddings.is_empty() {
            continue;
        }
        for e in &embeddings {
            let sims: Vec<f64> = seed_embeddings.iter().map(|s| e.cosine(s)).collect();
            max_sims.push(sims.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            min_sims.push(sims.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }

    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    Ok(SimilarityReport {
        mean_intra_group_cosine: mean(&pairwise_means),
        mean_max_seed_similarity: mean(&max_sims),
        mean_min_seed_similarity: mean(&min_sims),
        group_count: pairwise_means.len(),
        degenerate_group_count: degenerate,
        record_count: max_sims.len(),
    })
}
