//! Two-stage knowledge-point consolidation.
//!
//! Raw KP annotations are noisy: the same concept appears under case
//! variants, typos, and paraphrases. Consolidation shrinks the label set in
//! two stages and emits a [`KpAliasMap`] that rewrites the corpus:
//!
//! * **Stage 1 (surface form).** Labels are lowercased, grouped by their
//!   first `prefix_len` characters, and greedily clustered in sorted order.
//!   A label joins the first cluster whose every member `m` satisfies
//!   `edit_distance(label, m) <= max(3, floor(0.5 * max(len(label), len(m))))`,
//!   so the max pairwise edit distance inside a cluster always respects the
//!   length-scaled bound.
//! * **Stage 2 (co-occurrence).** Each surviving label gets a sparse
//!   co-occurrence vector over the full KP universe; labels whose vectors
//!   have cosine similarity above the threshold are merged single-linkage.
//!
//! Canonical labels come from a pluggable [`Summarizer`] when one is
//! configured, otherwise from a deterministic rule: highest corpus
//! frequency, ties broken by shortest label, then lexicographic order.
//! Thresholds are deliberately configurable; the defaults match the
//! reference setting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::par::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, QAInstance};

#[derive(Debug, Error)]
pub enum ConsolidationError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("summarizer unavailable: {0}")]
    SummarizerUnavailable(String),
    #[error("invalid alias map: {0}")]
    InvalidAliasMap(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tunable consolidation parameters (defaults = reference setting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationConfig {
    /// Characters of the stage-1 grouping prefix.
    pub prefix_len: usize,
    /// Absolute floor of the stage-1 edit-distance bound.
    pub edit_floor: usize,
    /// Length-scaled part of the stage-1 bound: `floor(edit_ratio * max_len)`.
    pub edit_ratio: f64,
    /// Stage-2 cosine similarity above which labels merge.
    pub cosine_threshold: f64,
    /// Fall back to the frequency rule when a configured summarizer fails.
    pub summarizer_fallback: bool,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        Self {
            prefix_len: 3,
            edit_floor: 3,
            edit_ratio: 0.5,
            cosine_threshold: 0.9,
            summarizer_fallback: true,
        }
    }
}

/// Levenshtein edit distance over Unicode scalar values (two-row DP).
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Stage-1 pairwise bound: `max(edit_floor, floor(edit_ratio * max(len)))`,
/// lengths in characters. With default parameters this is
/// `max(3, floor(0.5 * max(len(s1), len(s2))))`.
pub fn surface_threshold(s1: &str, s2: &str, cfg: &ConsolidationConfig) -> usize {
    let max_len = s1.chars().count().max(s2.chars().count());
    cfg.edit_floor.max((cfg.edit_ratio * max_len as f64).floor() as usize)
}

fn prefix_key(label: &str, prefix_len: usize) -> String {
    // Labels shorter than the prefix form their own group keyed by the
    // whole label.
    label.chars().take(prefix_len).collect()
}

/// Stage 1: prefix-grouped greedy clustering under the pairwise
/// edit-distance bound. Input labels should already be lowercased; they are
/// sorted and deduplicated internally, so the result is independent of
/// input order. Every input label appears in exactly one output cluster
/// (singletons included).
pub fn stage1_surface_cluster(labels: &[String], cfg: &ConsolidationConfig) -> Vec<Vec<String>> {
    let sorted: BTreeSet<&String> = labels.iter().collect();
    let mut groups: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for label in sorted {
        groups.entry(prefix_key(label, cfg.prefix_len)).or_default().push(label);
    }

    // Prefix groups are independent; cluster them in parallel and stitch the
    // results back together in key order.
    let grouped: Vec<(String, Vec<&String>)> = groups.into_iter().collect();
    let mut per_group: Vec<Vec<Vec<String>>> = grouped
        .par_iter()
        .map(|(_, members)| {
            let mut clusters: Vec<Vec<String>> = Vec::new();
            for &label in members {
                let slot = clusters.iter_mut().find(|cluster| {
                    cluster.iter().all(|m| {
                        edit_distance(label, m) <= surface_threshold(label, m, cfg)
                    })
                });
                match slot {
                    Some(cluster) => cluster.push(label.clone()),
                    None => clusters.push(vec![label.clone()]),
                }
            }
            clusters
        })
        .collect();

    per_group.drain(..).flatten().collect()
}

/// Sparse co-occurrence profile of one KP over the full KP universe.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceVector {
    pub kp: String,
    /// Neighbor KP -> number of instances containing both. Strictly
    /// positive; never contains `kp` itself.
    pub counts: BTreeMap<String, u64>,
}

/// Builds one co-occurrence vector per distinct KP, sorted by label.
pub fn build_cooccurrence_vectors(corpus: &Corpus) -> Vec<CooccurrenceVector> {
    let mut by_kp: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for inst in corpus.instances() {
        for kp in &inst.kps {
            by_kp.entry(kp).or_default();
        }
        for (i, a) in inst.kps.iter().enumerate() {
            for b in &inst.kps[i + 1..] {
                *by_kp.entry(a).or_default().entry(b).or_insert(0) += 1;
                *by_kp.entry(b).or_default().entry(a).or_insert(0) += 1;
            }
        }
    }
    by_kp
        .into_iter()
        .map(|(kp, counts)| CooccurrenceVector {
            kp: kp.to_string(),
            counts: counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
        .collect()
}

/// Cosine similarity of two sparse count vectors (0.0 when either is empty).
pub fn cosine_counts(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, &v)| large.get(k).map(|&w| v as f64 * w as f64))
        .sum();
    if dot == 0.0 {
        return 0.0;
    }
    let na: f64 = a.values().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Stage 2: single-linkage merge of KPs whose co-occurrence cosine exceeds
/// `threshold`. Components of the similarity graph become clusters
/// (singletons included); members and clusters are emitted in sorted order,
/// so the result does not depend on input order or scheduling.
pub fn stage2_cooccurrence_cluster(
    vectors: &[CooccurrenceVector],
    threshold: f64,
) -> Vec<Vec<String>> {
    let n = vectors.len();
    let edges: Vec<(u32, u32)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let vectors = &vectors;
            (i + 1..n).filter_map(move |j| {
                (cosine_counts(&vectors[i].counts, &vectors[j].counts) > threshold)
                    .then_some((i as u32, j as u32))
            })
        })
        .collect();

    let mut dsu = DisjointSets::new(n);
    for (i, j) in edges {
        dsu.union(i as usize, j as usize);
    }
    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, v) in vectors.iter().enumerate() {
        clusters.entry(dsu.find(i)).or_default().push(v.kp.clone());
    }
    let mut out: Vec<Vec<String>> = clusters.into_values().collect();
    for c in &mut out {
        c.sort();
    }
    out.sort();
    out
}

/// Union-find with union by size and path halving.
pub(crate) struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grand = self.parent[self.parent[x] as usize];
            self.parent[x] = grand;
            x = grand as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Produces a canonical label for a merged cluster (e.g. an LLM that
/// summarizes the members into one phrase).
pub trait Summarizer {
    fn summarize(&self, members: &[String]) -> Result<String, SummarizerError>;
}

#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct SummarizerError(pub String);

/// Picks the canonical label for a cluster.
///
/// With a summarizer configured its output wins; on summarizer failure the
/// default rule applies unless `fallback_on_error` is false, in which case
/// the error propagates. The default rule: highest corpus frequency
/// (instances whose `kps` contain the label), ties broken by shortest label
/// (in characters), then lexicographically smallest.
pub fn choose_canonical(
    cluster: &[String],
    corpus: &Corpus,
    summarizer: Option<&dyn Summarizer>,
    fallback_on_error: bool,
) -> Result<String, ConsolidationError> {
    if cluster.is_empty() {
        return Err(ConsolidationError::EmptyCluster);
    }
    if let Some(s) = summarizer {
        match s.summarize(cluster) {
            Ok(label) => return Ok(label),
            Err(e) if !fallback_on_error => {
                return Err(ConsolidationError::SummarizerUnavailable(e.0))
            }
            Err(_) => {}
        }
    }
    let mut freq: HashMap<&str, u64> = cluster.iter().map(|l| (l.as_str(), 0)).collect();
    for inst in corpus.instances() {
        for kp in &inst.kps {
            if let Some(slot) = freq.get_mut(kp.as_str()) {
                *slot += 1;
            }
        }
    }
    let best = cluster
        .iter()
        .min_by_key(|l| (std::cmp::Reverse(freq[l.as_str()]), l.chars().count(), l.as_str()))
        .expect("non-empty cluster");
    Ok(best.clone())
}

/// Rewrite table from raw KP labels to canonical ones.
///
/// Lookups fall back to identity, so an empty map is a no-op and only
/// non-identity entries are stored. Serialized form:
/// `{"canonical": {"raw label": "canonical label", ...}}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KpAliasMap {
    canonical: BTreeMap<String, String>,
    clusters: Vec<AliasCluster>,
}

/// One merged group: the canonical label and every label mapping to it
/// (canonical included), sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasCluster {
    pub canonical: String,
    pub members: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct AliasMapFile {
    canonical: BTreeMap<String, String>,
}

impl KpAliasMap {
    /// Validates idempotence (no canonical label may itself be remapped)
    /// and derives the cluster listing. Identity entries are dropped.
    pub fn new(mut canonical: BTreeMap<String, String>) -> Result<Self, ConsolidationError> {
        canonical.retain(|k, v| k != v);
        for target in canonical.values() {
            if let Some(next) = canonical.get(target) {
                return Err(ConsolidationError::InvalidAliasMap(format!(
                    "not idempotent: `{target}` is both a canonical label and an alias of `{next}`"
                )));
            }
        }
        let mut groups: BTreeMap<&String, Vec<String>> = BTreeMap::new();
        for (raw, canon) in &canonical {
            groups.entry(canon).or_default().push(raw.clone());
        }
        let clusters = groups
            .into_iter()
            .map(|(canon, mut members)| {
                members.push(canon.clone());
                members.sort();
                AliasCluster { canonical: canon.clone(), members }
            })
            .collect();
        Ok(Self { canonical, clusters })
    }

    pub fn canonical_of<'a>(&'a self, raw: &'a str) -> &'a str {
        self.canonical.get(raw).map_or(raw, String::as_str)
    }

    /// Non-identity entries.
    pub fn mappings(&self) -> &BTreeMap<String, String> {
        &self.canonical
    }

    pub fn clusters(&self) -> &[AliasCluster] {
        &self.clusters
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn to_json_string(&self) -> String {
        let file = AliasMapFile { canonical: self.canonical.clone() };
        serde_json::to_string_pretty(&file).expect("alias map serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConsolidationError> {
        let file: AliasMapFile = serde_json::from_str(text)
            .map_err(|e| ConsolidationError::InvalidAliasMap(e.to_string()))?;
        Self::new(file.canonical)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConsolidationError> {
        fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConsolidationError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

/// Rewrites every instance's `kps` to canonical form, collapsing duplicates
/// created by the rewrite (first occurrence kept). Instance count, order,
/// and all non-`kps` fields are unchanged.
pub fn apply_alias_map(corpus: &Corpus, map: &KpAliasMap) -> Corpus {
    let instances = corpus
        .instances()
        .iter()
        .map(|inst| {
            let mut seen = BTreeSet::new();
            let kps = inst
                .kps
                .iter()
                .map(|kp| map.canonical_of(kp).to_string())
                .filter(|kp| seen.insert(kp.clone()))
                .collect();
            QAInstance { kps, ..inst.clone() }
        })
        .collect();
    Corpus::new(instances, corpus.taxonomy().clone())
        .expect("rewrite preserves corpus validity")
}

/// Runs the full two-stage consolidation. Returns the composed alias map
/// (raw label → final canonical label) and the rewritten corpus.
///
/// Lowercasing is used for grouping and distance only; stored canonical
/// labels keep the original casing of the chosen representative, so
/// `{"Bayes Theorem", "bayes theorem"}` merges into whichever spelling the
/// canonical rule selects.
pub fn consolidate(
    corpus: &Corpus,
    cfg: &ConsolidationConfig,
    summarizer: Option<&dyn Summarizer>,
) -> Result<(KpAliasMap, Corpus), ConsolidationError> {
    let raw_labels: BTreeSet<String> =
        corpus.instances().iter().flat_map(|i| i.kps.iter().cloned()).collect();
    // Case variants share one lowercase form; stage 1 clusters the lowercase
    // universe, then each cluster expands back to its original spellings.
    let mut variants: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for raw in &raw_labels {
        variants.entry(raw.to_lowercase()).or_default().push(raw.clone());
    }
    let lowered: Vec<String> = variants.keys().cloned().collect();

    let mut map1: BTreeMap<String, String> = BTreeMap::new();
    for cluster in stage1_surface_cluster(&lowered, cfg) {
        let members: Vec<String> =
            cluster.iter().flat_map(|low| variants[low].iter().cloned()).collect();
        if members.len() < 2 {
            continue;
        }
        let canon = choose_canonical(&members, corpus, summarizer, cfg.summarizer_fallback)?;
        for member in members {
            map1.insert(member, canon.clone());
        }
    }
    let stage1_corpus = rewrite(corpus, |kp| resolve(&map1, kp));

    let vectors = build_cooccurrence_vectors(&stage1_corpus);
    let mut map2: BTreeMap<String, String> = BTreeMap::new();
    for cluster in stage2_cooccurrence_cluster(&vectors, cfg.cosine_threshold) {
        if cluster.len() < 2 {
            continue;
        }
        let canon =
            choose_canonical(&cluster, &stage1_corpus, summarizer, cfg.summarizer_fallback)?;
        for member in cluster {
            map2.insert(member, canon.clone());
        }
    }
    let final_corpus = rewrite(&stage1_corpus, |kp| resolve(&map2, kp));

    let composed: BTreeMap<String, String> = raw_labels
        .into_iter()
        .map(|raw| {
            let s1 = resolve(&map1, &raw);
            let s2 = resolve(&map2, &s1);
            (raw, s2)
        })
        .collect();
    Ok((KpAliasMap::new(composed)?, final_corpus))
}

fn resolve(map: &BTreeMap<String, String>, kp: &str) -> String {
    map.get(kp).cloned().unwrap_or_else(|| kp.to_string())
}

fn rewrite(corpus: &Corpus, f: impl Fn(&str) -> String) -> Corpus {
    let instances = corpus
        .instances()
        .iter()
        .map(|inst| {
            let mut seen = BTreeSet::new();
            let kps = inst
                .kps
                .iter()
                .map(|kp| f(kp))
                .filter(|kp| seen.insert(kp.clone()))
                .collect();
            QAInstance { kps, ..inst.clone() }
        })
        .collect();
    Corpus::new(instances, corpus.taxonomy().clone()).expect("rewrite preserves corpus validity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DisciplineTaxonomy, LoadMode};

    fn cfg() -> ConsolidationConfig {
        ConsolidationConfig::default()
    }

    fn corpus_from(lines: &[String]) -> Corpus {
        let text = lines.join("\n");
        crate::corpus::parse_corpus(&text, &DisciplineTaxonomy::default(), LoadMode::Strict)
            .unwrap()
            .0
    }

    fn inst(id: &str, kps: &[&str]) -> String {
        let kps = kps.iter().map(|k| format!("\"{k}\"")).collect::<Vec<_>>().join(",");
        format!(
            r#"{{"id":"{id}","text":"t","discipline":"Mathematics","difficulty":3,"kps":[{kps}]}}"#
        )
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance("", ""), 0);
        assert_eq!(edit_distance("abc", ""), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("bayes theorem", "bayes theorm"), 1);
        assert_eq!(edit_distance("naïve", "naive"), 1);
    }

    #[test]
    fn threshold_formula_matches_reference() {
        // max(3, floor(0.5 * 13)) = 6
        assert_eq!(surface_threshold("bayes theorem", "bayes theorm", &cfg()), 6);
        // short labels bottom out at the floor
        assert_eq!(surface_threshold("ab", "cd", &cfg()), 3);
        // max(3, floor(0.5 * 15)) = 7
        assert_eq!(surface_threshold("photosynthesis", "photon emission", &cfg()), 7);
    }

    #[test]
    fn stage1_merges_typos() {
        let labels = vec!["bayes theorem".to_string(), "bayes theorm".to_string()];
        let clusters = stage1_surface_cluster(&labels, &cfg());
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 2);
    }

    #[test]
    fn stage1_distinct_prefixes_never_merge() {
        let labels = vec!["abc".to_string(), "xyz".to_string()];
        let clusters = stage1_surface_cluster(&labels, &cfg());
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn stage1_respects_distance_bound_within_prefix_group() {
        // Same "pho" prefix but edit distance 8 > max(3, 7).
        assert_eq!(edit_distance("photosynthesis", "photon emission"), 8);
        let labels = vec!["photosynthesis".to_string(), "photon emission".to_string()];
        let clusters = stage1_surface_cluster(&labels, &cfg());
        assert_eq!(clusters.len(), 2);
    }

    #[test]
    fn stage1_bound_holds_pairwise_inside_every_cluster() {
        let labels: Vec<String> = ["abcdef", "abcdeg", "abcxyzuvw", "abc", "abd", "zzz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for cluster in stage1_surface_cluster(&labels, &cfg()) {
            for a in &cluster {
                for b in &cluster {
                    assert!(edit_distance(a, b) <= surface_threshold(a, b, &cfg()));
                }
            }
        }
    }

    #[test]
    fn cosine_examples() {
        let v = |pairs: &[(&str, u64)]| -> BTreeMap<String, u64> {
            pairs.iter().map(|(k, c)| (k.to_string(), *c)).collect()
        };
        let a = v(&[("x", 3), ("y", 4)]);
        let b = v(&[("x", 3), ("y", 4)]);
        assert!((cosine_counts(&a, &b) - 1.0).abs() < 1e-12);

        let c = v(&[("p", 5)]);
        assert_eq!(cosine_counts(&a, &c), 0.0);

        // (3,4,0) vs (3,4,1): 25 / (5 * sqrt(26)) ≈ 0.9806
        let d = v(&[("x", 3), ("y", 4), ("z", 1)]);
        let got = cosine_counts(&a, &d);
        assert!((got - 0.980_580_675_690_920_3).abs() < 1e-9, "{got}");
        assert!(got > 0.9);
    }

    #[test]
    fn stage2_single_linkage_merges_identical_profiles() {
        let corpus = corpus_from(&[
            inst("1", &["a", "x", "y"]),
            inst("2", &["b", "x", "y"]),
            inst("3", &["c", "q"]),
        ]);
        let vectors = build_cooccurrence_vectors(&corpus);
        let clusters = stage2_cooccurrence_cluster(&vectors, 0.9);
        // "a" and "b" share the co-occurrence profile {x:1, y:1} → cosine 1.0.
        let merged = clusters.iter().find(|c| c.contains(&"a".to_string())).unwrap();
        assert!(merged.contains(&"b".to_string()));
        assert!(!merged.contains(&"c".to_string()));
    }

    #[test]
    fn choose_canonical_prefers_frequency_then_length_then_lex() {
        let mut lines = vec![inst("0", &["bayes theorm"])];
        for i in 1..=10 {
            lines.push(inst(&format!("f{i}"), &["bayes theorem"]));
        }
        let corpus = corpus_from(&lines);
        let cluster = vec!["bayes theorem".to_string(), "bayes theorm".to_string()];
        assert_eq!(choose_canonical(&cluster, &corpus, None, true).unwrap(), "bayes theorem");

        // Equal frequency: shortest label wins.
        let corpus = corpus_from(&[inst("1", &["short"]), inst("2", &["shorthand"])]);
        let cluster = vec!["shorthand".to_string(), "short".to_string()];
        assert_eq!(choose_canonical(&cluster, &corpus, None, true).unwrap(), "short");

        // Equal frequency and length: lexicographic.
        let corpus = corpus_from(&[inst("1", &["abb"]), inst("2", &["aba"])]);
        let cluster = vec!["abb".to_string(), "aba".to_string()];
        assert_eq!(choose_canonical(&cluster, &corpus, None, true).unwrap(), "aba");
    }

    struct FailingSummarizer;
    impl Summarizer for FailingSummarizer {
        fn summarize(&self, _: &[String]) -> Result<String, SummarizerError> {
            Err(SummarizerError("offline".into()))
        }
    }

    struct FixedSummarizer;
    impl Summarizer for FixedSummarizer {
        fn summarize(&self, _: &[String]) -> Result<String, SummarizerError> {
            Ok("merged label".into())
        }
    }

    #[test]
    fn summarizer_wins_when_available_and_fallback_covers_failure() {
        let corpus = corpus_from(&[inst("1", &["a"])]);
        let cluster = vec!["a".to_string()];
        assert_eq!(
            choose_canonical(&cluster, &corpus, Some(&FixedSummarizer), true).unwrap(),
            "merged label"
        );
        assert_eq!(
            choose_canonical(&cluster, &corpus, Some(&FailingSummarizer), true).unwrap(),
            "a"
        );
        assert!(matches!(
            choose_canonical(&cluster, &corpus, Some(&FailingSummarizer), false),
            Err(ConsolidationError::SummarizerUnavailable(_))
        ));
    }

    #[test]
    fn alias_map_rejects_non_idempotent_chains() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), "b".to_string());
        m.insert("b".to_string(), "c".to_string());
        assert!(matches!(
            KpAliasMap::new(m),
            Err(ConsolidationError::InvalidAliasMap(_))
        ));
    }

    #[test]
    fn alias_map_roundtrips_and_applies() {
        let mut m = BTreeMap::new();
        m.insert("A-variant".to_string(), "a".to_string());
        let map = KpAliasMap::new(m).unwrap();
        let parsed = KpAliasMap::from_json_str(&map.to_json_string()).unwrap();
        assert_eq!(parsed, map);
        assert_eq!(map.clusters().len(), 1);
        assert_eq!(map.clusters()[0].members, vec!["A-variant", "a"]);

        let corpus = corpus_from(&[inst("1", &["a", "A-variant", "b"])]);
        let rewritten = apply_alias_map(&corpus, &map);
        assert_eq!(rewritten.instances()[0].kps, vec!["a", "b"]);
        assert_eq!(rewritten.len(), corpus.len());

        // Empty map is the identity.
        let same = apply_alias_map(&corpus, &KpAliasMap::default());
        assert_eq!(same, corpus);
    }

    #[test]
    fn consolidate_collapses_case_typos_and_profiles() {
        let mut lines = vec![
            inst("1", &["Bayes Theorem", "prior probability"]),
            inst("2", &["bayes theorem", "prior probability"]),
            inst("3", &["bayes theorm", "likelihood"]),
        ];
        // Give "bayes theorem" the highest folded frequency.
        for i in 4..=8 {
            lines.push(inst(&format!("{i}"), &["bayes theorem", "posterior"]));
        }
        let corpus = corpus_from(&lines);
        let (map, rewritten) = consolidate(&corpus, &cfg(), None).unwrap();
        assert_eq!(map.canonical_of("Bayes Theorem"), "bayes theorem");
        assert_eq!(map.canonical_of("bayes theorm"), "bayes theorem");
        let universe: BTreeSet<&str> = rewritten
            .instances()
            .iter()
            .flat_map(|i| i.kps.iter().map(String::as_str))
            .collect();
        assert!(universe.contains("bayes theorem"));
        assert!(!universe.contains("bayes theorm"));
        assert_eq!(rewritten.len(), corpus.len());
    }

    #[test]
    fn consolidate_never_grows_the_universe_and_is_deterministic() {
        let lines = vec![
            inst("1", &["Graph Theory", "graph theory", "trees"]),
            inst("2", &["graph theorey", "trees"]),
            inst("3", &["matrix", "trees"]),
        ];
        let corpus = corpus_from(&lines);
        let before: BTreeSet<String> =
            corpus.instances().iter().flat_map(|i| i.kps.iter().cloned()).collect();
        let (map_a, out_a) = consolidate(&corpus, &cfg(), None).unwrap();
        let (map_b, out_b) = consolidate(&corpus, &cfg(), None).unwrap();
        assert_eq!(map_a.to_json_string(), map_b.to_json_string());
        assert_eq!(out_a, out_b);
        let after: BTreeSet<String> =
            out_a.instances().iter().flat_map(|i| i.kps.iter().cloned()).collect();
        assert!(after.len() <= before.len());
    }
}
