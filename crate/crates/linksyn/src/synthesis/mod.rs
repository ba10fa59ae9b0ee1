//! Diffusion-style QA synthesis over seed groups.
//!
//! Each seed group is rendered into a synthesizer prompt (see
//! [`templates`]), sent to a pluggable completion [`backend`], and the JSON
//! payload is parsed into validated [`SynthRecord`]s. A second pass,
//! [`refine_answers`], re-derives every answer with the regenerator prompt
//! and applies the multiple-choice missing-answer rule (append a fifth
//! option `(E) …` and point the answer index at it).
//!
//! Requests run on a bounded pool: at most `max_in_flight` completions are
//! outstanding, retryable failures back off exponentially, and results are
//! reassembled in input order so output never depends on scheduling.
//! Malformed payloads get one repair attempt (a fresh completion) and are
//! then quarantined with their raw bytes instead of failing the run.

pub mod backend;
pub mod templates;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::rng::RngStream;
use crate::selection::SeedGroup;

pub use backend::{Backend, BackendConfig, BackendError, MockBackend, MockPlan, RetryPolicy};
pub use templates::{
    annotation_prompt, default_gen_num, AnnotationKind, PromptTemplate, QuestionType, RoleAssigner,
};

#[cfg(feature = "http")]
pub use backend::HttpBackend;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("seed group has {actual} seeds but template expects {expected}")]
    ArityMismatch { expected: usize, actual: usize },
    #[error("seed instance `{0}` not found in corpus")]
    UnknownSeed(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

/// Where a record came from: enough to re-render the exact prompt bytes
/// (group + template) and to locate the raw completion (digests).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub group_id: String,
    pub template_id: String,
    pub backend_id: String,
    /// SHA-256 hex of the synthesis completion this record was parsed from.
    pub response_digest: String,
    /// SHA-256 hex of the refinement completion, once refined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_digest: Option<String>,
}

/// One synthesized QA item. Multiple-choice records carry `options` (4, or 5
/// after the missing-answer rule) and an `answer_index`; essay records carry
/// a `solution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    pub provenance: Provenance,
    pub refined: bool,
}

impl SynthRecord {
    pub fn question_type(&self) -> QuestionType {
        if self.options.is_some() {
            QuestionType::MultipleChoice
        } else {
            QuestionType::EssayQuestion
        }
    }

    /// The record view embedded in the regenerator prompt.
    fn refine_view(&self) -> serde_json::Value {
        match &self.options {
            Some(options) => serde_json::json!({
                "question": self.question,
                "options": options,
                "answer_index": self.answer_index,
                "answer": self.answer,
            }),
            None => serde_json::json!({
                "question": self.question,
                "answer": self.answer,
            }),
        }
    }
}

/// Schema check applied before a record may reach an output file.
pub fn validate_record(record: &SynthRecord) -> Result<(), String> {
    if record.question.trim().is_empty() {
        return Err("empty question".into());
    }
    if record.answer.trim().is_empty() {
        return Err("empty answer".into());
    }
    match &record.options {
        Some(options) => {
            if options.len() != 4 && options.len() != 5 {
                return Err(format!("expected 4 or 5 options, got {}", options.len()));
            }
            if options.iter().any(|o| o.trim().is_empty()) {
                return Err("empty option text".into());
            }
            match record.answer_index {
                Some(idx) if idx < options.len() => {}
                Some(idx) => return Err(format!("answer_index {idx} out of range")),
                None => return Err("multiple-choice record without answer_index".into()),
            }
        }
        None => {
            if record.answer_index.is_some() {
                return Err("answer_index without options".into());
            }
            if record.refined
                && record.solution.as_ref().is_none_or(|s| s.trim().is_empty())
            {
                return Err("refined essay record without solution".into());
            }
        }
    }
    Ok(())
}

/// A completion that could not be turned into valid records; written to the
/// `*.rejected.jsonl` quarantine with its raw payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPayload {
    /// Seed group id (synthesis) or record id (refinement).
    pub source_id: String,
    pub template_id: String,
    /// SHA-256 hex of the raw payload (empty when no completion happened).
    pub digest: String,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct SynthesisOutput {
    pub records: Vec<SynthRecord>,
    pub rejected: Vec<RejectedPayload>,
}

/// How `synthesize_auto` assigns per-group prompt variants.
#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Probability a group is synthesized as multiple-choice (the rest are
    /// essay questions). The reference pipeline has no stated mix, so this
    /// is plain configuration.
    pub mcq_fraction: f64,
    /// Fixed persona, or an even per-group coin flip.
    pub role: Option<RoleAssigner>,
    pub rng_seed: u64,
    /// Overrides for the ref_num → gen_num mapping.
    pub gen_num_overrides: HashMap<usize, usize>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { mcq_fraction: 1.0, role: None, rng_seed: 0, gen_num_overrides: HashMap::new() }
    }
}

/// Positional seed-group identifier used in provenance (`g000042` for the
/// 43rd group of the input file).
pub fn group_label(index: usize) -> String {
    format!("g{index:06}")
}

/// Synthesizes every group with one fixed template. Groups must match the
/// template's `ref_num` exactly; see [`synthesize_auto`] for mixed group
/// sizes.
pub fn synthesize(
    groups: &[SeedGroup],
    template: &PromptTemplate,
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &BackendConfig,
) -> Result<SynthesisOutput, SynthesisError> {
    let jobs: Vec<(usize, &SeedGroup, &PromptTemplate)> =
        groups.iter().enumerate().map(|(i, g)| (i, g, template)).collect();
    run_synthesis_jobs(&jobs, corpus, backend, config)
}

/// Synthesizes mixed groups: each group gets the template matching its seed
/// count, with question type and persona drawn per group from substream
/// `(rng_seed, group index)`. Groups with zero seeds or more seeds than any
/// template supports are quarantined, not fatal.
pub fn synthesize_auto(
    groups: &[SeedGroup],
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &BackendConfig,
    options: &SynthesisOptions,
) -> Result<SynthesisOutput, SynthesisError> {
    if !(0.0..=1.0).contains(&options.mcq_fraction) {
        return Err(SynthesisError::InvalidTemplate(format!(
            "mcq_fraction {} outside [0, 1]",
            options.mcq_fraction
        )));
    }
    // Materialize every (type, ref_num, role) template up front so the
    // parallel section only reads.
    let mut registry: HashMap<(QuestionType, usize, RoleAssigner), PromptTemplate> =
        HashMap::new();
    for qt in [QuestionType::MultipleChoice, QuestionType::EssayQuestion] {
        for ref_num in 1..=3 {
            for role in [RoleAssigner::College, RoleAssigner::Graduate] {
                let gen = options.gen_num_overrides.get(&ref_num).copied();
                registry.insert((qt, ref_num, role), PromptTemplate::synthesizer(qt, ref_num, role, gen)?);
            }
        }
    }

    let mut jobs: Vec<(usize, &SeedGroup, &PromptTemplate)> = Vec::with_capacity(groups.len());
    let mut rejected = Vec::new();
    for (i, group) in groups.iter().enumerate() {
        // Both coins are always drawn so the stream layout is independent of
        // the configured fractions.
        let mut rng = RngStream::substream(options.rng_seed, i as u64);
        let type_coin = rng.next_f64();
        let role_coin = rng.next_f64();
        let qt = if type_coin < options.mcq_fraction {
            QuestionType::MultipleChoice
        } else {
            QuestionType::EssayQuestion
        };
        let role = options.role.unwrap_or(if role_coin < 0.5 {
            RoleAssigner::College
        } else {
            RoleAssigner::Graduate
        });
        let ref_num = group.seeds.len();
        match registry.get(&(qt, ref_num, role)) {
            Some(template) => jobs.push((i, group, template)),
            None => rejected.push(RejectedPayload {
                source_id: group_label(i),
                template_id: String::new(),
                digest: String::new(),
                raw: String::new(),
                reason: format!("no template for a group with {ref_num} seeds"),
            }),
        }
    }

    let mut output = run_synthesis_jobs(&jobs, corpus, backend, config)?;
    output.rejected.extend(rejected);
    output.rejected.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    Ok(output)
}

fn run_synthesis_jobs(
    jobs: &[(usize, &SeedGroup, &PromptTemplate)],
    corpus: &Corpus,
    backend: &dyn Backend,
    config: &BackendConfig,
) -> Result<SynthesisOutput, SynthesisError> {
    enum GroupOutcome {
        Records(Vec<SynthRecord>),
        Rejected(RejectedPayload),
        Fatal(SynthesisError),
    }

    let outcomes = run_pool(jobs.len(), config.max_in_flight, |slot| {
        let (group_index, group, template) = &jobs[slot];
        let group_id = group_label(*group_index);
        let prompt = match template.render(group, corpus) {
            Ok(p) => p,
            Err(e) => return GroupOutcome::Fatal(e),
        };
        match complete_parsed(backend, &config.retry, &prompt, |raw| {
            parse_synth_items(raw, template.question_type, template.gen_num)
        }) {
            Ok((items, digest)) => {
                let records = items
                    .into_iter()
                    .enumerate()
                    .map(|(j, item)| SynthRecord {
                        id: format!("{group_id}-{}-r{j:02}", template.id),
                        question: item.question,
                        options: item.options,
                        answer_index: item.answer_index,
                        answer: item.answer,
                        solution: item.solution,
                        provenance: Provenance {
                            group_id: group_id.clone(),
                            template_id: template.id.clone(),
                            backend_id: backend.id().to_string(),
                            response_digest: digest.clone(),
                            refine_digest: None,
                        },
                        refined: false,
                    })
                    .collect();
                GroupOutcome::Records(records)
            }
            Err(CompletionFailure::Backend(e)) => GroupOutcome::Fatal(e.into()),
            Err(CompletionFailure::Parse { raw, reason }) => {
                GroupOutcome::Rejected(RejectedPayload {
                    source_id: group_id,
                    template_id: template.id.clone(),
                    digest: backend::hex_digest(&raw),
                    raw,
                    reason,
                })
            }
        }
    });

    let mut output = SynthesisOutput::default();
    for outcome in outcomes {
        match outcome {
            GroupOutcome::Records(records) => {
                for r in &records {
                    debug_assert_eq!(validate_record(r), Ok(()));
                }
                output.records.extend(records);
            }
            GroupOutcome::Rejected(r) => output.rejected.push(r),
            GroupOutcome::Fatal(e) => return Err(e),
        }
    }
    Ok(output)
}

#[derive(Debug, Default)]
pub struct RefineOutput {
    pub records: Vec<SynthRecord>,
    /// Records whose refinement payload never became usable.
    pub rejected: Vec<RejectedPayload>,
}

/// Re-derives every record's answer through the regenerator prompt. On a
/// missing-correct-option flag, a fifth option `(E) <answer>` is appended
/// and the answer index points at it; the original options are untouched.
/// Records whose refinement cannot be parsed or violates the schema are
/// quarantined rather than passed through half-updated.
pub fn refine_answers(
    records: &[SynthRecord],
    backend: &dyn Backend,
    config: &BackendConfig,
) -> Result<RefineOutput, SynthesisError> {
    enum Outcome {
        Record(Box<SynthRecord>),
        Rejected(RejectedPayload),
        Fatal(SynthesisError),
    }

    let mcq_template = PromptTemplate::regenerator(QuestionType::MultipleChoice);
    let essay_template = PromptTemplate::regenerator(QuestionType::EssayQuestion);

    let outcomes = run_pool(records.len(), config.max_in_flight, |slot| {
        let record = &records[slot];
        let template = match record.question_type() {
            QuestionType::MultipleChoice => &mcq_template,
            QuestionType::EssayQuestion => &essay_template,
        };
        let view = record.refine_view().to_string();
        let prompt = match template.render_refine(&view) {
            Ok(p) => p,
            Err(e) => return Outcome::Fatal(e),
        };
        let reject = |raw: String, reason: String| {
            Outcome::Rejected(RejectedPayload {
                source_id: record.id.clone(),
                template_id: template.id.clone(),
                digest: backend::hex_digest(&raw),
                raw,
                reason,
            })
        };
        match complete_parsed(backend, &config.retry, &prompt, parse_refine) {
            Ok((draft, digest)) => {
                let mut updated = record.clone();
                updated.answer = draft.final_answer;
                updated.solution = Some(draft.solution_steps);
                if let Some(options) = &mut updated.options {
                    if draft.missing_correct_option {
                        if options.len() != 4 {
                            return reject(
                                String::new(),
                                format!(
                                    "cannot add fifth option to {} existing options",
                                    options.len()
                                ),
                            );
                        }
                        options.push(format!("(E) {}", updated.answer));
                        updated.answer_index = Some(4);
                    } else if let Some(idx) = draft.answer_index {
                        if idx < options.len() {
                            updated.answer_index = Some(idx);
                        }
                    }
                }
                updated.refined = true;
                updated.provenance.refine_digest = Some(digest);
                match validate_record(&updated) {
                    Ok(()) => Outcome::Record(Box::new(updated)),
                    Err(reason) => reject(String::new(), reason),
                }
            }
            Err(CompletionFailure::Backend(e)) => Outcome::Fatal(e.into()),
            Err(CompletionFailure::Parse { raw, reason }) => reject(raw, reason),
        }
    });

    let mut output = RefineOutput::default();
    for outcome in outcomes {
        match outcome {
            Outcome::Record(r) => output.records.push(*r),
            Outcome::Rejected(r) => output.rejected.push(r),
            Outcome::Fatal(e) => return Err(e),
        }
    }
    Ok(output)
}

// ---------------------------------------------------------------------------
// Request pool
// ---------------------------------------------------------------------------

/// Runs `jobs` closures over at most `max_in_flight` worker threads. Workers
/// pull job indices from a shared counter and write into per-slot cells, so
/// results come back in input order no matter how execution interleaved.
fn run_pool<T, F>(jobs: usize, max_in_flight: usize, job: F) -> Vec<T>
where
    T: Send + Sync,
    F: Fn(usize) -> T + Sync,
{
    let workers = max_in_flight.max(1).min(jobs);
    let slots: Vec<OnceLock<T>> = (0..jobs).map(|_| OnceLock::new()).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs {
                    break;
                }
                let _ = slots[i].set(job(i));
            });
        }
    });
    slots
        .into_iter()
        .map(|cell| cell.into_inner().expect("every slot filled"))
        .collect()
}

enum CompletionFailure {
    Backend(BackendError),
    Parse { raw: String, reason: String },
}

/// One completion with retry/backoff on retryable errors, then a parse; a
/// malformed payload earns exactly one repair completion before giving up.
fn complete_parsed<T>(
    backend: &dyn Backend,
    retry: &RetryPolicy,
    prompt: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<(T, String), CompletionFailure> {
    let mut last: Option<(String, String)> = None;
    for _repair in 0..2 {
        let raw = complete_with_retry(backend, retry, prompt)
            .map_err(CompletionFailure::Backend)?;
        match parse(&raw) {
            Ok(value) => return Ok((value, backend::hex_digest(&raw))),
            Err(reason) => last = Some((raw, reason)),
        }
    }
    let (raw, reason) = last.expect("at least one parse attempt");
    Err(CompletionFailure::Parse { raw, reason })
}

fn complete_with_retry(
    backend: &dyn Backend,
    retry: &RetryPolicy,
    prompt: &str,
) -> Result<String, BackendError> {
    let mut attempt = 0u32;
    loop {
        match backend.complete(prompt) {
            Ok(text) => return Ok(text),
            Err(e) if e.retryable() && attempt < retry.max_retries => {
                std::thread::sleep(std::time::Duration::from_millis(retry.delay_ms(attempt)));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Payload parsing
// ---------------------------------------------------------------------------

/// Extracts the first balanced `open…close` region, skipping delimiters
/// inside JSON strings. Tolerates surrounding prose and code fences; when a
/// candidate opener never closes (a stray bracket in prose), extraction
/// retries from the next opener.
fn extract_balanced(text: &str, open: char, close: char) -> Option<&str> {
    let mut from = 0;
    while let Some(offset) = text[from..].find(open) {
        let start = from + offset;
        if let Some(end) = balanced_end(&text[start..], open, close) {
            return Some(&text[start..start + end]);
        }
        from = start + open.len_utf8();
    }
    None
}

/// Byte length of the balanced region opening at `text[0]`, if it closes.
fn balanced_end(text: &str, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        if c == '"' {
            in_string = true;
        } else if c == open {
            depth += 1;
        } else if c == close {
            depth = depth.checked_sub(1)?;
            if depth == 0 {
                return Some(i + c.len_utf8());
            }
        }
    }
    None
}

struct ItemDraft {
    question: String,
    options: Option<Vec<String>>,
    answer_index: Option<usize>,
    answer: String,
    solution: Option<String>,
}

fn non_empty_str(value: &serde_json::Value, key: &str) -> Option<String> {
    value
        .get(key)
        .and_then(|v| v.as_str())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
}

fn item_from_value(value: &serde_json::Value, qt: QuestionType) -> Option<ItemDraft> {
    let question = non_empty_str(value, "question")?;
    match qt {
        QuestionType::MultipleChoice => {
            let options: Vec<String> = value
                .get("options")?
                .as_array()?
                .iter()
                .map(|o| o.as_str().map(str::to_string))
                .collect::<Option<_>>()?;
            if options.len() != 4 || options.iter().any(|o| o.trim().is_empty()) {
                return None;
            }
            let idx = value.get("answer_index")?.as_u64()? as usize;
            if idx >= options.len() {
                return None;
            }
            Some(ItemDraft {
                question,
                answer: options[idx].clone(),
                options: Some(options),
                answer_index: Some(idx),
                solution: None,
            })
        }
        QuestionType::EssayQuestion => {
            let solution = non_empty_str(value, "solution")?;
            let answer = non_empty_str(value, "answer")?;
            Some(ItemDraft {
                question,
                options: None,
                answer_index: None,
                answer,
                solution: Some(solution),
            })
        }
    }
}

/// Parses a synthesizer payload: locate the JSON array, keep schema-valid
/// items (capped at `gen_num`), fail only when nothing valid remains.
fn parse_synth_items(
    raw: &str,
    qt: QuestionType,
    gen_num: usize,
) -> Result<Vec<ItemDraft>, String> {
    let slice = extract_balanced(raw, '[', ']').ok_or("no JSON array in payload")?;
    let values: Vec<serde_json::Value> =
        serde_json::from_str(slice).map_err(|e| format!("array parse failed: {e}"))?;
    let mut items: Vec<ItemDraft> =
        values.iter().filter_map(|v| item_from_value(v, qt)).collect();
    if items.is_empty() {
        return Err("no schema-valid items in payload".into());
    }
    items.truncate(gen_num);
    Ok(items)
}

struct RefineDraft {
    solution_steps: String,
    final_answer: String,
    answer_index: Option<usize>,
    missing_correct_option: bool,
}

fn parse_refine(raw: &str) -> Result<RefineDraft, String> {
    let slice = extract_balanced(raw, '{', '}').ok_or("no JSON object in payload")?;
    let value: serde_json::Value =
        serde_json::from_str(slice).map_err(|e| format!("object parse failed: {e}"))?;
    Ok(RefineDraft {
        solution_steps: non_empty_str(&value, "solution_steps")
            .ok_or("missing solution_steps")?,
        final_answer: non_empty_str(&value, "final_answer").ok_or("missing final_answer")?,
        answer_index: value.get("answer_index").and_then(|v| v.as_u64()).map(|v| v as usize),
        missing_correct_option: value
            .get("missing_correct_option")
            .and_then(|v| v.as_bool())
            .unwrap_or(false),
    })
}
