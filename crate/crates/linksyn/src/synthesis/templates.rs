//! Prompt templates for QA synthesis, answer refinement, and corpus
//! annotation.
//!
//! Template bodies carry six placeholders — `{Role Assigner}`, `{ref_num}`,
//! `{gen_num}`, `{Seed Data}`, `{Format-specific Constraints}` and
//! `{Format-specified JSON}` — resolved at render time. Braced fragments
//! outside that set (e.g. Bloom-tier alternatives) are literal prompt text.
//! Rendering is pure string substitution, so equal inputs produce identical
//! bytes.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DisciplineTaxonomy};
use crate::selection::SeedGroup;
use crate::synthesis::SynthesisError;

/// Default generation volume per reference count: 1 seed → 10 questions,
/// 2 → 15, 3 → 20.
pub fn default_gen_num(ref_num: usize) -> Option<usize> {
    match ref_num {
        1 => Some(10),
        2 => Some(15),
        3 => Some(20),
        _ => None,
    }
}

/// Persona the synthesizer prompt adopts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleAssigner {
    College,
    Graduate,
}

impl RoleAssigner {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleAssigner::College => "college",
            RoleAssigner::Graduate => "graduate",
        }
    }
}

/// Output format the synthesizer is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionType {
    #[serde(rename = "multiple-choice")]
    MultipleChoice,
    #[serde(rename = "essay-question")]
    EssayQuestion,
}

impl QuestionType {
    pub fn slug(self) -> &'static str {
        match self {
            QuestionType::MultipleChoice => "mcq",
            QuestionType::EssayQuestion => "essay",
        }
    }

    fn constraints(self) -> &'static str {
        match self {
            QuestionType::MultipleChoice => MCQ_CONSTRAINTS,
            QuestionType::EssayQuestion => ESSAY_CONSTRAINTS,
        }
    }

    fn output_schema(self) -> &'static str {
        match self {
            QuestionType::MultipleChoice => MCQ_SCHEMA,
            QuestionType::EssayQuestion => ESSAY_SCHEMA,
        }
    }

    fn refine_constraints(self) -> &'static str {
        match self {
            QuestionType::MultipleChoice => MCQ_REFINE_CONSTRAINTS,
            QuestionType::EssayQuestion => ESSAY_REFINE_CONSTRAINTS,
        }
    }

    fn refine_schema(self) -> &'static str {
        match self {
            QuestionType::MultipleChoice => MCQ_REFINE_SCHEMA,
            QuestionType::EssayQuestion => ESSAY_REFINE_SCHEMA,
        }
    }
}

const ROLE_PLACEHOLDER: &str = "{Role Assigner}";
const REF_PLACEHOLDER: &str = "{ref_num}";
const GEN_PLACEHOLDER: &str = "{gen_num}";
const SEED_PLACEHOLDER: &str = "{Seed Data}";
const CONSTRAINT_PLACEHOLDER: &str = "{Format-specific Constraints}";
const SCHEMA_PLACEHOLDER: &str = "{Format-specified JSON}";
const QUESTION_PLACEHOLDER: &str = "{Question}";

const SYNTHESIZER_BODY: &str = "\
Act as a {Role Assigner} educator, analyze the knowledge points assessed by the provided {ref_num} reference questions. Generate {gen_num} novel questions adhering to these requirements:
1. Questions must demonstrate substantial differentiation while testing application or higher-order use of identified knowledge points.
2. Difficulty must align with high-difficulty standards through:
   a) Down-scaling overqualified knowledge points to prerequisite concepts at graduate level
   b) Up-scaling underqualified points to advanced applications at graduate level
3. Linguistic consistency must be maintained with the input questions.
{Format-specific Constraints}
[Difficulty Reference Guide]
1. Knowledge Analysis:
   - Core concepts (<=3)
   - Integration type: {single | cross-chapter | cross-discipline}
2. Cognitive Tier (Bloom's Taxonomy):
   {memory | understanding | application | analysis | synthesis | evaluation}
3. Difficulty Calibration:
   - Estimate pass rate 0 <= P <= 100%
   - Tier Classification:
     - extreme: P < 10%
     - challenge: 10% <= P < 30%
     - improvement: 30% <= P < 50%
     - standard: 50% <= P < 80%
     - basic: P >= 80%
   - ENSURE generated questions match reference difficulty tier

Output Schema: {Format-specified JSON}
Input: {Seed Data}";

const REGENERATOR_BODY: &str = "\
Please strictly follow the requirements below to analyze the given question and answer:
Answer Requirements
1. Perform step-by-step reasoning and show the complete thought process, which must include:
   - Extraction of key information from the question
   - Application of relevant formulas/theorems
   - Analysis of each option individually
   - Reminders of common error types
   - Display of logical reasoning chains
2. Answer format requirements:
   - Must include both 'Solution Steps' and 'Final Answer' fields
3. Notes
   - If the question already includes solution steps and answers, please ignore them and don't be influenced by them, as they may be incorrect or suboptimal.
   - For multiple-choice questions:
     * If the correct answer is missing:
         - Add a fifth option: \"(E) [Correct Answer]\"
         - Set answer_index=4
         - Keep the original options unchanged
{Format-specific Constraints}
Output Schema: {Format-specified JSON}
Input: {Question}";

const MCQ_CONSTRAINTS: &str = "4. The generated question type is multiple-choice. For each question, four alternative options must be generated, and among the four options, there must be one correct answer.";

const ESSAY_CONSTRAINTS: &str = "4. The generated question type is essay-question. For each question, the solution steps and the final correct answer are provided. The generated questions cannot be open-ended questions (such as those of the solution type, thinking type, information listing type, etc.), but must be self-contained with a final answer that can be determined as correct.";

const MCQ_SCHEMA: &str = r#"[{"question": "", "options": [], "answer_index": 0-3}, ...]"#;

const ESSAY_SCHEMA: &str = r#"[{"question": "", "solution": "", "answer": ""}, ...]"#;

const MCQ_REFINE_CONSTRAINTS: &str = "4. The input question is multiple-choice. Analyze every option, identify the single correct one, and report its zero-based answer_index. Set missing_correct_option to true only when none of the given options is correct.";

const ESSAY_REFINE_CONSTRAINTS: &str = "4. The input question is an essay question. Provide complete solution steps and a final answer that can be verified as correct.";

const MCQ_REFINE_SCHEMA: &str = r#"{"solution_steps": "", "final_answer": "", "answer_index": 0-4, "missing_correct_option": true|false}"#;

const ESSAY_REFINE_SCHEMA: &str = r#"{"solution_steps": "", "final_answer": ""}"#;

/// A renderable prompt: the synthesizer (seed groups in, question batches
/// out) or the answer regenerator (one QA record in, refined answer out).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub role_assigner: RoleAssigner,
    /// Number of seed references the prompt expects.
    pub ref_num: usize,
    /// Number of questions the prompt requests.
    pub gen_num: usize,
    pub question_type: QuestionType,
    pub body: String,
}

impl PromptTemplate {
    /// Synthesizer template for `ref_num` seeds. `gen_num` falls back to the
    /// default mapping; a `ref_num` outside {1,2,3} without an explicit
    /// `gen_num` is rejected.
    pub fn synthesizer(
        question_type: QuestionType,
        ref_num: usize,
        role: RoleAssigner,
        gen_num: Option<usize>,
    ) -> Result<Self, SynthesisError> {
        let gen_num = gen_num.or_else(|| default_gen_num(ref_num)).ok_or_else(|| {
            SynthesisError::InvalidTemplate(format!(
                "no gen_num mapping for ref_num {ref_num}; pass one explicitly"
            ))
        })?;
        if ref_num == 0 {
            return Err(SynthesisError::InvalidTemplate("ref_num must be >= 1".into()));
        }
        Ok(Self {
            id: format!("{}-{}-{}", question_type.slug(), ref_num, role.as_str()),
            role_assigner: role,
            ref_num,
            gen_num,
            question_type,
            body: SYNTHESIZER_BODY.to_string(),
        })
    }

    /// Answer-regenerator template for one record of the given type.
    pub fn regenerator(question_type: QuestionType) -> Self {
        Self {
            id: format!("refine-{}", question_type.slug()),
            role_assigner: RoleAssigner::College,
            ref_num: 1,
            gen_num: 1,
            question_type,
            body: REGENERATOR_BODY.to_string(),
        }
    }

    /// Renders the synthesizer prompt for a seed group: seeds are resolved
    /// from the corpus and concatenated in path order as `Sample i: <text>`.
    pub fn render(&self, group: &SeedGroup, corpus: &Corpus) -> Result<String, SynthesisError> {
        if group.seeds.len() != self.ref_num {
            return Err(SynthesisError::ArityMismatch {
                expected: self.ref_num,
                actual: group.seeds.len(),
            });
        }
        let mut seed_block = String::new();
        for (i, id) in group.seeds.iter().enumerate() {
            let idx = corpus
                .index_of(id)
                .ok_or_else(|| SynthesisError::UnknownSeed(id.clone()))?;
            if i > 0 {
                seed_block.push_str("\n\n");
            }
            seed_block
                .push_str(&format!("Sample {}: {}", i + 1, corpus.instances()[idx as usize].text));
        }
        let text = self
            .body
            .replace(ROLE_PLACEHOLDER, self.role_assigner.as_str())
            .replace(REF_PLACEHOLDER, &self.ref_num.to_string())
            .replace(GEN_PLACEHOLDER, &self.gen_num.to_string())
            .replace(CONSTRAINT_PLACEHOLDER, self.question_type.constraints())
            .replace(SCHEMA_PLACEHOLDER, self.question_type.output_schema())
            .replace(SEED_PLACEHOLDER, &seed_block);
        Self::check_resolved(&text)?;
        Ok(text)
    }

    /// Renders the regenerator prompt around a serialized QA record.
    pub fn render_refine(&self, record_json: &str) -> Result<String, SynthesisError> {
        let text = self
            .body
            .replace(CONSTRAINT_PLACEHOLDER, self.question_type.refine_constraints())
            .replace(SCHEMA_PLACEHOLDER, self.question_type.refine_schema())
            .replace(QUESTION_PLACEHOLDER, record_json);
        Self::check_resolved(&text)?;
        Ok(text)
    }

    fn check_resolved(text: &str) -> Result<(), SynthesisError> {
        for marker in [
            ROLE_PLACEHOLDER,
            REF_PLACEHOLDER,
            GEN_PLACEHOLDER,
            SEED_PLACEHOLDER,
            CONSTRAINT_PLACEHOLDER,
            SCHEMA_PLACEHOLDER,
            QUESTION_PLACEHOLDER,
        ] {
            if text.contains(marker) {
                return Err(SynthesisError::InvalidTemplate(format!(
                    "unresolved placeholder {marker}"
                )));
            }
        }
        Ok(())
    }
}

/// Annotation prompts for labeling raw corpora (discipline, difficulty
/// tier, knowledge points) through the same backend interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationKind {
    Discipline,
    Difficulty,
    KnowledgePoints,
}

const DISCIPLINE_CLASSIFIER_BODY: &str = "\
Act as an educational taxonomist. Classify the input question into our standardized discipline hierarchy using sequential reasoning, then output strictly in JSON format:
1. Primary Discipline Identification
   Select exactly one primary discipline from:
   {Discipline List}
   - Use \"cross-discipline\" only for explicit multi-domain integration
   - Assign \"Other\" only if no discipline matches >=60%
2. Secondary Discipline Assignment
   - Identify the most specific applicable sub-discipline
   - Null if primary discipline has no sub-domains
   - Use \"General\" for non-specialized content
3. Validation Rules
   - Reject non-educational content -> Output \"Invalid\"
   - Correct spelling/terminology variations before classification
Output Schema:
{
  \"primary_discipline\": \"\",
  \"secondary_discipline\": \"\",
  \"confidence\": 0.0-1.0,
  \"rejection_reason\": null
}
Input: {Seed Data}";

const DIFFICULTY_SCORER_BODY: &str = "\
Act as an educational assessment expert, analyze the provided question through sequential reasoning and output strictly in JSON format:
1. Knowledge Analysis
   - Core concepts (<=3): [comma-separated list]
   - Integration type: {single-concept | cross-chapter | cross-discipline}
2. Cognitive Tier (Bloom's Taxonomy)
   {memory | understanding | application | analysis | synthesis | evaluation}
3. Difficulty Assessment
   - Estimated pass rate (P) for QS Top 100 university majors: [0-100%]
   - Tier:
     - extreme: P < 10%
     - challenge: 10% <= P < 30%
     - improvement: 30% <= P < 50%
     - standard: 50% <= P < 80%
     - basic: P >= 80%
     - other: invalid inputs
4. Exception Handling
   - Mark \"other\" for non-questions/unanswerable items
   - Correct minor errors (e.g., missing correct options) before assessment
   - Ignore provided solutions/answers

Output Schema:
{
  \"difficulty_tier\": \"basic|standard|improvement|challenge|extreme|other\",
  \"rationale\": [
    \"Involves {N} core knowledge points\",
    \"Cognitive level: {Bloom's tier}\",
    \"Estimated pass rate: approximately {XX}%\"
  ]
}
Input: {Seed Data}";

const KP_ANNOTATOR_BODY: &str = "\
Act as an educational taxonomist. Analyze the provided item through step-by-step reasoning and output strictly in JSON format:
1. discipline Classification
   - Identify the discipline to which the item belongs.
   - discipline list: {Discipline List}
2. Educational Level
   - Choose from: [Elementary School, Middle School, High School, University, Graduate School]
3. Knowledge Point Analysis
    - Core knowledge points (<=3): [comma-separated list]
    - Knowledge Point Definition: A knowledge point refers to the most basic and smallest content unit that constitutes a knowledge system within a certain discipline area.
    - Example:
     - Mathematics: Properties of linear functions
     - English: Present perfect tense
     - Biology: Basic laws of heredity
4. Exception Handling
   - Ignore any provided solutions or answer steps, as they may be incorrect or suboptimal.
   - Only select from the provided candidate lists for discipline, Assessment Ability, and Educational Level.
Output Schema:
{
  \"Knowledge Point List\": [
    \"Properties of linear functions\"
    ...
  ]
}
Input: {Seed Data}";

/// Renders an annotation prompt for one raw item. The discipline list is
/// spliced in where the classifier and KP prompts reference it.
pub fn annotation_prompt(
    kind: AnnotationKind,
    taxonomy: &DisciplineTaxonomy,
    item_text: &str,
) -> String {
    let body = match kind {
        AnnotationKind::Discipline => DISCIPLINE_CLASSIFIER_BODY,
        AnnotationKind::Difficulty => DIFFICULTY_SCORER_BODY,
        AnnotationKind::KnowledgePoints => KP_ANNOTATOR_BODY,
    };
    let list = format!("['{}']", taxonomy.labels().join("', '"));
    body.replace("{Discipline List}", &list).replace(SEED_PLACEHOLDER, item_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, LoadMode};
    use crate::sampling::{Path, Policy};

    fn one_seed_group() -> (SeedGroup, Corpus) {
        let line = r#"{"id": "q1", "text": "What is the determinant of a 2x2 identity matrix?", "discipline": "Mathematics", "difficulty": 2, "kps": ["determinant"]}"#;
        let (corpus, _) = parse_corpus(line, &DisciplineTaxonomy::default(), LoadMode::Strict).unwrap();
        let group = SeedGroup {
            path: Path {
                kps: vec!["determinant".to_string()],
                policy: Policy::Coverage,
                truncated: false,
            },
            target_difficulty: 3,
            target_discipline: "Mathematics".to_string(),
            seeds: vec!["q1".to_string()],
            skipped_nodes: vec![],
        };
        (group, corpus)
    }

    #[test]
    fn gen_num_mapping_defaults() {
        assert_eq!(default_gen_num(1), Some(10));
        assert_eq!(default_gen_num(2), Some(15));
        assert_eq!(default_gen_num(3), Some(20));
        assert_eq!(default_gen_num(4), None);
        let t =
            PromptTemplate::synthesizer(QuestionType::MultipleChoice, 2, RoleAssigner::College, None)
                .unwrap();
        assert_eq!(t.gen_num, 15);
        assert!(PromptTemplate::synthesizer(
            QuestionType::MultipleChoice,
            4,
            RoleAssigner::College,
            None
        )
        .is_err());
    }

    #[test]
    fn render_substitutes_seed_text_and_counts() {
        let (group, corpus) = one_seed_group();
        let t =
            PromptTemplate::synthesizer(QuestionType::MultipleChoice, 1, RoleAssigner::Graduate, None)
                .unwrap();
        let prompt = t.render(&group, &corpus).unwrap();
        assert!(prompt.contains("What is the determinant of a 2x2 identity matrix?"));
        assert!(prompt.contains("Generate 10 novel questions"));
        assert!(prompt.contains("provided 1 reference questions"));
        assert!(prompt.contains("Act as a graduate educator"));
        assert!(prompt.contains("multiple-choice"));
        assert!(prompt.contains(r#""answer_index": 0-3"#));
        // Literal brace fragments survive; placeholders do not.
        assert!(prompt.contains("{memory | understanding"));
        assert!(!prompt.contains("{Seed Data}"));
    }

    #[test]
    fn render_is_deterministic() {
        let (group, corpus) = one_seed_group();
        let t = PromptTemplate::synthesizer(
            QuestionType::EssayQuestion,
            1,
            RoleAssigner::College,
            None,
        )
        .unwrap();
        assert_eq!(t.render(&group, &corpus).unwrap(), t.render(&group, &corpus).unwrap());
    }

    #[test]
    fn render_rejects_arity_mismatch() {
        let (group, corpus) = one_seed_group();
        let t =
            PromptTemplate::synthesizer(QuestionType::MultipleChoice, 2, RoleAssigner::College, None)
                .unwrap();
        match t.render(&group, &corpus) {
            Err(SynthesisError::ArityMismatch { expected: 2, actual: 1 }) => {}
            other => panic!("expected arity mismatch, got {other:?}"),
        }
    }

    #[test]
    fn render_rejects_unknown_seed() {
        let (mut group, corpus) = one_seed_group();
        group.seeds = vec!["missing".to_string()];
        let t =
            PromptTemplate::synthesizer(QuestionType::MultipleChoice, 1, RoleAssigner::College, None)
                .unwrap();
        assert!(matches!(t.render(&group, &corpus), Err(SynthesisError::UnknownSeed(_))));
    }

    #[test]
    fn refine_prompt_embeds_record_and_rule() {
        let t = PromptTemplate::regenerator(QuestionType::MultipleChoice);
        let prompt = t.render_refine(r#"{"question": "Q?", "options": ["a","b","c","d"]}"#).unwrap();
        assert!(prompt.contains(r#"Add a fifth option: "(E) [Correct Answer]""#));
        assert!(prompt.contains("answer_index=4"));
        assert!(prompt.contains(r#"{"question": "Q?", "options": ["a","b","c","d"]}"#));
    }

    #[test]
    fn annotation_prompts_embed_taxonomy_and_item() {
        let tax = DisciplineTaxonomy::default();
        for kind in [
            AnnotationKind::Discipline,
            AnnotationKind::Difficulty,
            AnnotationKind::KnowledgePoints,
        ] {
            let p = annotation_prompt(kind, &tax, "Sample item text");
            assert!(p.contains("Sample item text"));
            assert!(!p.contains("{Seed Data}"));
        }
        let p = annotation_prompt(AnnotationKind::Discipline, &tax, "x");
        assert!(p.contains("'Mathematics'"));
        assert!(p.contains("'Forestry'"));
    }
}
