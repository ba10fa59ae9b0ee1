//! Annotated QA corpus: the input data model for the whole pipeline.
//!
//! A corpus is a JSON-lines file, one instance per line:
//!
//! ```json
//! {"id": "q1", "text": "...", "discipline": "Physics", "difficulty": 3, "kps": ["entropy", "ideal gas"]}
//! ```
//!
//! `difficulty` is an integer tier in `1..=5`; the string spellings
//! `"H1"`..`"H5"` are accepted on input and normalized to the integer form.
//! Unknown extra fields are preserved verbatim (values untouched, keys
//! re-emitted in lexicographic order after the canonical fields) so corpora
//! can carry provenance or scoring columns through the pipeline opaquely.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::par::prelude::*;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed instance: {cause}")]
    MalformedLine { line: usize, cause: String },
    #[error("line {line}: unknown discipline `{label}`")]
    UnknownDiscipline { line: usize, label: String },
    #[error("line {line}: empty kp set")]
    EmptyKpSet { line: usize },
    #[error("duplicate instance id `{id}`")]
    DuplicateId { id: String },
    #[error("corpus contains no instances")]
    EmptyCorpus,
    #[error("taxonomy: {0}")]
    BadTaxonomy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One annotated question-answer instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub text: String,
    pub discipline: String,
    #[serde(deserialize_with = "de_difficulty")]
    pub difficulty: u8,
    pub kps: Vec<String>,
    /// Unknown fields, passed through untouched.
    #[serde(flatten, default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

fn de_difficulty<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
    struct DifficultyVisitor;

    impl Visitor<'_> for DifficultyVisitor {
        type Value = u8;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("difficulty tier: integer 1..=5 or string \"H1\"..\"H5\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<u8, E> {
            if (1..=5).contains(&v) {
                Ok(v as u8)
            } else {
                Err(E::custom(format!("difficulty must be in 1..=5, got {v}")))
            }
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<u8, E> {
            if (1..=5).contains(&v) {
                Ok(v as u8)
            } else {
                Err(E::custom(format!("difficulty must be in 1..=5, got {v}")))
            }
        }

        fn visit_str<E: de::Error>(self, s: &str) -> Result<u8, E> {
            match s.strip_prefix('H').and_then(|t| t.parse::<u8>().ok()) {
                Some(v) if (1..=5).contains(&v) => Ok(v),
                _ => Err(E::custom(format!(
                    "difficulty must be \"H1\"..\"H5\" or 1..=5, got `{s}`"
                ))),
            }
        }
    }

    d.deserialize_any(DifficultyVisitor)
}

/// The closed set of discipline labels instances may carry.
#[derive(Debug, Clone, PartialEq)]
pub struct DisciplineTaxonomy {
    labels: Vec<String>,
    index: HashMap<String, u16>,
}

impl DisciplineTaxonomy {
    pub fn new(labels: Vec<String>) -> Result<Self, CorpusError> {
        if labels.is_empty() {
            return Err(CorpusError::BadTaxonomy("label list is empty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(CorpusError::BadTaxonomy(format!("entry {i} is empty")));
            }
            if index.insert(label.clone(), i as u16).is_some() {
                return Err(CorpusError::BadTaxonomy(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Loads a taxonomy from a JSON array of strings.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)?;
        let labels: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| CorpusError::BadTaxonomy(format!("expected a JSON string array: {e}")))?;
        Self::new(labels)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Default for DisciplineTaxonomy {
    /// The built-in 62-label primary-discipline taxonomy.
    fn default() -> Self {
        Self::new(DEFAULT_DISCIPLINES.iter().map(|s| s.to_string()).collect())
            .expect("built-in taxonomy is valid")
    }
}

/// Built-in primary-discipline labels (62 entries).
pub const DEFAULT_DISCIPLINES: [&str; 62] = [
    "Mathematics",
    "Computer Science and Technology",
    "Clinical Medicine",
    "Chemistry",
    "Economics",
    "Information Science and Systems Science",
    "Physics",
    "Biology",
    "Law",
    "Philosophy",
    "Sociology",
    "Literature",
    "Psychology",
    "Statistics",
    "History",
    "Power and Electrical Engineering",
    "Earth Science",
    "Management Science",
    "Electronics and Communication Technology",
    "Linguistics",
    "Preventive Medicine and Public Health",
    "Political Science",
    "Education Science",
    "Aerospace Science and Technology",
    "Astronomy",
    "Materials Science",
    "Mechanics",
    "Sports Science",
    "Ethnology and Cultural Studies",
    "Basic Medicine",
    "Environmental Science and Resource Science",
    "Journalism and Communication",
    "Religious Studies",
    "Engineering and Technology Related to Information and Systems Science",
    "Food Science and Technology",
    "Engineering and Technology",
    "Art Studies",
    "Mechanical Engineering",
    "Traditional Chinese Medicine and Chinese Materia Medica",
    "Pharmacy",
    "Civil and Architectural Engineering",
    "Chemical Engineering",
    "Nuclear Science and Technology",
    "Marxism",
    "Agronomy",
    "Energy Science and Technology",
    "Transportation Engineering",
    "Military Science",
    "Safety Science and Technology",
    "Animal Husbandry and Veterinary Science",
    "Archaeology",
    "Engineering and Technology Related to Product Applications",
    "Library, Information and Documentation Science",
    "Geomatics Science and Technology",
    "Aquaculture Science",
    "Metallurgical Engineering Technology",
    "Hydraulic Engineering",
    "Military Medicine and Special Medicine",
    "Textile Science and Technology",
    "Mining Engineering Technology",
    "Forestry",
    "Engineering and Technology Related to Natural Sciences",
];

/// How `load_corpus` reacts to invalid lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// First invalid line aborts the load.
    #[default]
    Strict,
    /// Invalid lines are skipped and reported.
    Lenient,
}

/// Per-load accounting, mainly interesting under [`LoadMode::Lenient`].
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
    /// First few errors encountered (capped; `skipped` holds the full count).
    pub errors: Vec<String>,
}

const LOAD_REPORT_ERROR_CAP: usize = 20;

/// A validated instance collection plus the taxonomy it was checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    instances: Vec<QAInstance>,
    taxonomy: DisciplineTaxonomy,
    id_to_index: HashMap<String, u32>,
}

impl Corpus {
    /// Validates and indexes a set of instances. Instance order is preserved;
    /// it defines the Φ (instance-list) order used downstream.
    pub fn new(
        instances: Vec<QAInstance>,
        taxonomy: DisciplineTaxonomy,
    ) -> Result<Self, CorpusError> {
        if instances.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut id_to_index = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            validate_instance(inst, i + 1, &taxonomy)?;
            match id_to_index.entry(inst.id.clone()) {
                Entry::Vacant(slot) => {
                    slot.insert(i as u32);
                }
                Entry::Occupied(_) => {
                    return Err(CorpusError::DuplicateId { id: inst.id.clone() })
                }
            }
        }
        Ok(Self { instances, taxonomy, id_to_index })
    }

    pub fn instances(&self) -> &[QAInstance] {
        &self.instances
    }

    pub fn taxonomy(&self) -> &DisciplineTaxonomy {
        &self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QAInstance> {
        self.id_to_index.get(id).map(|&i| &self.instances[i as usize])
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.id_to_index.get(id).copied()
    }
}

fn validate_instance(
    inst: &QAInstance,
    line: usize,
    taxonomy: &DisciplineTaxonomy,
) -> Result<(), CorpusError> {
    if inst.id.is_empty() {
        return Err(CorpusError::MalformedLine { line, cause: "empty id".into() });
    }
    if inst.kps.is_empty() {
        return Err(CorpusError::EmptyKpSet { line });
    }
    let mut seen = HashMap::with_capacity(inst.kps.len());
    for kp in &inst.kps {
        if kp.is_empty() {
            return Err(CorpusError::MalformedLine { line, cause: "empty kp label".into() });
        }
        if seen.insert(kp.as_str(), ()).is_some() {
            return Err(CorpusError::MalformedLine {
                line,
                cause: format!("duplicate kp `{kp}`"),
            });
        }
    }
    if !taxonomy.contains(&inst.discipline) {
        return Err(CorpusError::UnknownDiscipline { line, label: inst.discipline.clone() });
    }
    Ok(())
}

/// Parses corpus text (JSON lines). Whitespace-only lines are ignored.
/// Parsing is sharded across threads; line numbers in errors are 1-based.
pub fn parse_corpus(
    text: &str,
    taxonomy: &DisciplineTaxonomy,
    mode: LoadMode,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let parsed: Vec<Result<(usize, QAInstance), CorpusError>> = lines
        .par_iter()
        .map(|&(line, raw)| {
            let inst: QAInstance = serde_json::from_str(raw)
                .map_err(|e| CorpusError::MalformedLine { line, cause: e.to_string() })?;
            validate_instance(&inst, line, taxonomy)?;
            Ok((line, inst))
        })
        .collect();

    let mut report = LoadReport::default();
    let mut instances = Vec::with_capacity(parsed.len());
    let mut id_to_index: HashMap<String, u32> = HashMap::with_capacity(parsed.len());
    for item in parsed {
        let err = match item {
            Ok((_, inst)) => match id_to_index.entry(inst.id.clone()) {
                Entry::Vacant(slot) => {
                    slot.insert(instances.len() as u32);
                    instances.push(inst);
                    report.loaded += 1;
                    continue;
                }
                Entry::Occupied(_) => CorpusError::DuplicateId { id: inst.id },
            },
            Err(e) => e,
        };
        match mode {
            LoadMode::Strict => return Err(err),
            LoadMode::Lenient => {
                report.skipped += 1;
                if report.errors.len() < LOAD_REPORT_ERROR_CAP {
                    report.errors.push(err.to_string());
                }
            }
        }
    }
    if instances.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let corpus = Corpus { instances, taxonomy: taxonomy.clone(), id_to_index };
    Ok((corpus, report))
}

/// Loads a corpus file. See [`parse_corpus`].
pub fn load_corpus(
    path: impl AsRef<Path>,
    taxonomy: &DisciplineTaxonomy,
    mode: LoadMode,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, taxonomy, mode)
}

/// Serializes one instance in canonical form: compact JSON, fields in
/// declaration order (`id`, `text`, `discipline`, `difficulty`, `kps`),
/// extra fields last in lexicographic key order, difficulty as an integer.
pub fn canonical_line(inst: &QAInstance) -> String {
    serde_json::to_string(inst).expect("instance serialization cannot fail")
}

/// Writes a corpus as canonical JSON lines.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for inst in corpus.instances() {
        out.write_all(canonical_line(inst).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Fraction of instances annotated with two or more knowledge points.
pub fn multi_kp_fraction(corpus: &Corpus) -> f64 {
    let multi = corpus.instances().iter().filter(|i| i.kps.len() >= 2).count();
    multi as f64 / corpus.len() as f64
}
