//! Task data model, language metadata and JSON Lines persistence.
//!
//! Three task kinds flow through the pipeline: grade-school math with a
//! worked rationale, extractive QA over a context passage, and NLI over a
//! premise/hypothesis pair. Every sample splits into an input projection
//! (what the model reads) and an output projection (what it must produce).
//!
//! Character offsets are Unicode scalar values, never bytes.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::rational::Rational;

/// Marker that introduces the final answer on the last line of a math rationale.
pub const ANSWER_MARKER: &str = "#### ";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid language tag: {0}")]
    InvalidLanguage(String),
    #[error("{path}: line {line}: malformed JSON: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("sample {id}: answer span does not match context at offset {start}")]
    SpanMismatch { id: String, start: usize },
    #[error("sample {id}: {message}")]
    InvalidSample { id: String, message: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id} is {found}, dataset task is {expected}")]
    TaskMismatch {
        id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTag {
    code: String,
    display_name: String,
    #[serde(default)]
    char_weight: Rational,
}

impl LanguageTag {
    pub fn new(code: impl Into<String>, display_name: impl Into<String>, char_weight: Rational) -> Result<Self> {
        let code = code.into();
        if code.is_empty()
            || !code
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
        {
            return Err(CorpusError::InvalidLanguage(format!(
                "code {code:?} must be non-empty lowercase ASCII"
            )));
        }
        if char_weight.is_zero() {
            return Err(CorpusError::InvalidLanguage(format!(
                "{code}: char_weight must be positive"
            )));
        }
        Ok(LanguageTag {
            code,
            display_name: display_name.into(),
            char_weight,
        })
    }

    /// Built-in metadata for the languages the pipeline ships defaults for.
    /// Chinese characters carry a length weight of 3; everything else 1.
    pub fn builtin(code: &str) -> Option<Self> {
        let (name, weight) = match code {
            "en" => ("English", 1),
            "de" => ("German", 1),
            "ru" => ("Russian", 1),
            "th" => ("Thai", 1),
            "zh" => ("Chinese", 3),
            _ => return None,
        };
        Some(LanguageTag {
            code: code.to_string(),
            display_name: name.to_string(),
            char_weight: Rational::from_integer(weight),
        })
    }

    /// Built-in tag when known, otherwise a weight-1 tag named after its code.
    pub fn from_code(code: &str) -> Result<Self> {
        match Self::builtin(code) {
            Some(tag) => Ok(tag),
            None => Self::new(code, code, Rational::ONE),
        }
    }

    pub fn english() -> Self {
        Self::builtin("en").expect("en is built in")
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn display_name(&self) -> &str {
        &self.display_name
    }

    pub fn char_weight(&self) -> Rational {
        self.char_weight
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Math,
    #[serde(rename = "qa", alias = "extractive_qa")]
    ExtractiveQa,
    Nli,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Math => "math",
            TaskKind::ExtractiveQa => "qa",
            TaskKind::Nli => "nli",
        }
    }

    /// Fields translated for this task, in translation order.
    pub fn translatable_fields(&self) -> &'static [&'static str] {
        match self {
            TaskKind::Math => &["question", "answer"],
            TaskKind::ExtractiveQa => &["context", "question"],
            TaskKind::Nli => &["premise", "hypothesis"],
        }
    }

    /// Fields that make up the input projection.
    pub fn input_fields(&self) -> &'static [&'static str] {
        match self {
            TaskKind::Math => &["question"],
            TaskKind::ExtractiveQa => &["context", "question"],
            TaskKind::Nli => &["premise", "hypothesis"],
        }
    }

    /// Whether the task output is free-form natural language (as opposed to a closed label).
    pub fn output_is_natural_language(&self) -> bool {
        !matches!(self, TaskKind::Nli)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "math" | "gsm8k" => Ok(TaskKind::Math),
            "qa" | "extractive_qa" | "extractive-qa" | "squad" => Ok(TaskKind::ExtractiveQa),
            "nli" | "mnli" | "xnli" => Ok(TaskKind::Nli),
            other => Err(CorpusError::InvalidSample {
                id: String::new(),
                message: format!("unknown task kind {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment,
    Neutral,
    Contradiction,
}

impl NliLabel {
    pub const ALL: [NliLabel; 3] = [NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction];

    /// Canonical lowercase storage form.
    pub fn as_str(&self) -> &'static str {
        match self {
            NliLabel::Entailment => "entailment",
            NliLabel::Neutral => "neutral",
            NliLabel::Contradiction => "contradiction",
        }
    }

    /// Capitalized form used as the model-facing output.
    pub fn display_name(&self) -> &'static str {
        match self {
            NliLabel::Entailment => "Entailment",
            NliLabel::Neutral => "Neutral",
            NliLabel::Contradiction => "Contradiction",
        }
    }
}

impl fmt::Display for NliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NliLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" => Ok(NliLabel::Entailment),
            "neutral" => Ok(NliLabel::Neutral),
            "contradiction" => Ok(NliLabel::Contradiction),
            other => Err(format!("unknown NLI label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MathSample {
    id: String,
    question: String,
    rationale: String,
    final_answer: String,
}

impl MathSample {
    /// Builds a sample whose final answer is read from the last `#### ` marker.
    pub fn new(id: impl Into<String>, question: impl Into<String>, rationale: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let rationale = rationale.into();
        let final_answer = parse_final_answer(&rationale).ok_or_else(|| CorpusError::InvalidSample {
            id: id.clone(),
            message: format!("rationale has no {ANSWER_MARKER:?} answer line"),
        })?;
        Ok(MathSample {
            id,
            question: question.into(),
            rationale,
            final_answer,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn rationale(&self) -> &str {
        &self.rationale
    }

    pub fn final_answer(&self) -> &str {
        &self.final_answer
    }
}

/// Text after the last `#### ` marker, trimmed; `None` if absent or empty.
pub fn parse_final_answer(rationale: &str) -> Option<String> {
    let pos = rationale.rfind(ANSWER_MARKER)?;
    let tail = rationale[pos + ANSWER_MARKER.len()..].trim();
    if tail.is_empty() || tail.contains('\n') {
        None
    } else {
        Some(tail.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    id: String,
    context: String,
    question: String,
    answer_text: String,
    answer_start: usize,
}

impl QaSample {
    /// Validates that `answer_text` sits at character offset `answer_start` of `context`.
    pub fn new(
        id: impl Into<String>,
        context: impl Into<String>,
        question: impl Into<String>,
        answer_text: impl Into<String>,
        answer_start: usize,
    ) -> Result<Self> {
        let id = id.into();
        let context = context.into();
        let answer_text = answer_text.into();
        if !span_matches(&context, answer_start, &answer_text) {
            return Err(CorpusError::SpanMismatch {
                id,
                start: answer_start,
            });
        }
        Ok(QaSample {
            id,
            context,
            question: question.into(),
            answer_text,
            answer_start,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn answer_text(&self) -> &str {
        &self.answer_text
    }

    pub fn answer_start(&self) -> usize {
        self.answer_start
    }
}

/// Character-exact span check: `context[start .. start + len(span)] == span`.
pub fn span_matches(context: &str, start: usize, span: &str) -> bool {
    match char_to_byte(context, start) {
        Some(byte) => context[byte..].starts_with(span),
        None => false,
    }
}

/// Byte index of the `char_idx`-th scalar value; `Some(len)` for one past the end.
pub(crate) fn char_to_byte(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (byte, _) in text.char_indices() {
        if count == char_idx {
            return Some(byte);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NliSample {
    id: String,
    premise: String,
    hypothesis: String,
    label: NliLabel,
}

impl NliSample {
    pub fn new(
        id: impl Into<String>,
        premise: impl Into<String>,
        hypothesis: impl Into<String>,
        label: NliLabel,
    ) -> Self {
        NliSample {
            id: id.into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            label,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn premise(&self) -> &str {
        &self.premise
    }

    pub fn hypothesis(&self) -> &str {
        &self.hypothesis
    }

    pub fn label(&self) -> NliLabel {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sample {
    Math(MathSample),
    Qa(QaSample),
    Nli(NliSample),
}

/// The input side `x` of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskInput {
    Math { question: String },
    Qa { context: String, question: String },
    Nli { premise: String, hypothesis: String },
}

/// The output side `y` of a sample.
///
/// `answer_start` is `None` for QA outputs paired with a context they were not
/// extracted from (code-switched records).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskOutput {
    Math {
        rationale: String,
        final_answer: String,
    },
    Qa {
        answer_text: String,
        answer_start: Option<usize>,
    },
    Nli {
        label: NliLabel,
    },
}

impl TaskInput {
    pub fn task(&self) -> TaskKind {
        match self {
            TaskInput::Math { .. } => TaskKind::Math,
            TaskInput::Qa { .. } => TaskKind::ExtractiveQa,
            TaskInput::Nli { .. } => TaskKind::Nli,
        }
    }
}

impl TaskOutput {
    pub fn task(&self) -> TaskKind {
        match self {
            TaskOutput::Math { .. } => TaskKind::Math,
            TaskOutput::Qa { .. } => TaskKind::ExtractiveQa,
            TaskOutput::Nli { .. } => TaskKind::Nli,
        }
    }
}

impl Sample {
    pub fn id(&self) -> &str {
        match self {
            Sample::Math(s) => &s.id,
            Sample::Qa(s) => &s.id,
            Sample::Nli(s) => &s.id,
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Sample::Math(_) => TaskKind::Math,
            Sample::Qa(_) => TaskKind::ExtractiveQa,
            Sample::Nli(_) => TaskKind::Nli,
        }
    }

    pub fn input_projection(&self) -> TaskInput {
        match self {
            Sample::Math(s) => TaskInput::Math {
                question: s.question.clone(),
            },
            Sample::Qa(s) => TaskInput::Qa {
                context: s.context.clone(),
                question: s.question.clone(),
            },
            Sample::Nli(s) => TaskInput::Nli {
                premise: s.premise.clone(),
                hypothesis: s.hypothesis.clone(),
            },
        }
    }

    pub fn output_projection(&self) -> TaskOutput {
        match self {
            Sample::Math(s) => TaskOutput::Math {
                rationale: s.rationale.clone(),
                final_answer: s.final_answer.clone(),
            },
            Sample::Qa(s) => TaskOutput::Qa {
                answer_text: s.answer_text.clone(),
                answer_start: Some(s.answer_start),
            },
            Sample::Nli(s) => TaskOutput::Nli { label: s.label },
        }
    }

    /// Text of a named field, using the JSON Lines field names.
    pub fn field(&self, name: &str) -> Option<&str> {
        match (self, name) {
            (Sample::Math(s), "question") => Some(&s.question),
            (Sample::Math(s), "answer") => Some(&s.rationale),
            (Sample::Qa(s), "context") => Some(&s.context),
            (Sample::Qa(s), "question") => Some(&s.question),
            (Sample::Qa(s), "answer_text") => Some(&s.answer_text),
            (Sample::Nli(s), "premise") => Some(&s.premise),
            (Sample::Nli(s), "hypothesis") => Some(&s.hypothesis),
            (Sample::Nli(s), "label") => Some(s.label.as_str()),
            _ => None,
        }
    }

    /// Same sample under a different id.
    pub fn with_id(&self, id: impl Into<String>) -> Sample {
        let id = id.into();
        let mut sample = self.clone();
        match &mut sample {
            Sample::Math(s) => s.id = id,
            Sample::Qa(s) => s.id = id,
            Sample::Nli(s) => s.id = id,
        }
        sample
    }

    /// The JSON Lines representation of this sample.
    pub fn to_record(&self) -> Value {
        let mut map = Map::new();
        map.insert("id".into(), Value::String(self.id().to_string()));
        match self {
            Sample::Math(s) => {
                map.insert("question".into(), s.question.clone().into());
                map.insert("answer".into(), s.rationale.clone().into());
            }
            Sample::Qa(s) => {
                map.insert("context".into(), s.context.clone().into());
                map.insert("question".into(), s.question.clone().into());
                map.insert("answer_text".into(), s.answer_text.clone().into());
                map.insert("answer_start".into(), s.answer_start.into());
            }
            Sample::Nli(s) => {
                map.insert("premise".into(), s.premise.clone().into());
                map.insert("hypothesis".into(), s.hypothesis.clone().into());
                map.insert("label".into(), s.label.as_str().into());
            }
        }
        Value::Object(map)
    }

    /// Parses a JSON Lines record. `default_id` is used when the record has no `id`.
    pub fn from_record(task: TaskKind, record: &Value, default_id: &str) -> Result<Sample, String> {
        let obj = record.as_object().ok_or("expected a JSON object")?;
        let id = match obj.get("id") {
            None | Some(Value::Null) => default_id.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(_) => return Err("field \"id\" must be a string".into()),
        };
        let text = |name: &str| -> Result<String, String> {
            match obj.get(name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(format!("field {name:?} must be a string")),
                None => Err(format!("missing field {name:?}")),
            }
        };
        match task {
            TaskKind::Math => MathSample::new(id, text("question")?, text("answer")?)
                .map(Sample::Math)
                .map_err(|e| e.to_string()),
            TaskKind::ExtractiveQa => {
                let start = match obj.get("answer_start") {
                    Some(Value::Number(n)) => n
                        .as_u64()
                        .ok_or("field \"answer_start\" must be a non-negative integer")?
                        as usize,
                    Some(_) => return Err("field \"answer_start\" must be an integer".into()),
                    None => return Err("missing field \"answer_start\"".into()),
                };
                QaSample::new(id, text("context")?, text("question")?, text("answer_text")?, start)
                    .map(Sample::Qa)
                    .map_err(|e| e.to_string())
            }
            TaskKind::Nli => {
                let label: NliLabel = text("label")?.parse()?;
                Ok(Sample::Nli(NliSample::new(
                    id,
                    text("premise")?,
                    text("hypothesis")?,
                    label,
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Source,
    Target,
    CodeSwitched,
    Mixed,
}

impl fmt::Display for DatasetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetRole::Source => "source",
            DatasetRole::Target => "target",
            DatasetRole::CodeSwitched => "code_switched",
            DatasetRole::Mixed => "mixed",
        })
    }
}

/// A monolingual collection of samples of one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    task: TaskKind,
    language: LanguageTag,
    role: DatasetRole,
    samples: Vec<Sample>,
    provenance: Vec<String>,
}

impl Dataset {
    pub fn new(task: TaskKind, language: LanguageTag, role: DatasetRole, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for sample in &samples {
            if sample.task() != task {
                return Err(CorpusError::TaskMismatch {
                    id: sample.id().to_string(),
                    expected: task,
                    found: sample.task(),
                });
            }
            if !seen.insert(sample.id()) {
                return Err(CorpusError::DuplicateId(sample.id().to_string()));
            }
        }
        Ok(Dataset {
            task,
            language,
            role,
            samples,
            provenance: Vec::new(),
        })
    }

    pub fn empty(task: TaskKind, language: LanguageTag, role: DatasetRole) -> Self {
        Dataset {
            task,
            language,
            role,
            samples: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn language(&self) -> &LanguageTag {
        &self.language
    }

    pub fn role(&self) -> DatasetRole {
        self.role
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// N, the number of samples.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance.push(note.into());
        self
    }

    pub fn with_role(mut self, role: DatasetRole) -> Self {
        self.role = role;
        self
    }

    fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset {
            task: self.task,
            language: self.language.clone(),
            role: self.role,
            samples,
            provenance: self.provenance.clone(),
        }
    }
}

/// A source sample and its translation, sharing one id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    src: Sample,
    tgt: Sample,
    src_lang: String,
    tgt_lang: String,
}

impl ParallelPair {
    pub fn new(src: Sample, tgt: Sample, src_lang: &str, tgt_lang: &str) -> Result<Self> {
        if src.id() != tgt.id() {
            return Err(CorpusError::InvalidSample {
                id: src.id().to_string(),
                message: format!("parallel pair ids differ: {:?} vs {:?}", src.id(), tgt.id()),
            });
        }
        if src.task() != tgt.task() {
            return Err(CorpusError::TaskMismatch {
                id: src.id().to_string(),
                expected: src.task(),
                found: tgt.task(),
            });
        }
        if src_lang == tgt_lang {
            return Err(CorpusError::InvalidSample {
                id: src.id().to_string(),
                message: format!("parallel pair languages must differ (both {src_lang})"),
            });
        }
        Ok(ParallelPair {
            src,
            tgt,
            src_lang: src_lang.to_string(),
            tgt_lang: tgt_lang.to_string(),
        })
    }

    pub fn id(&self) -> &str {
        self.src.id()
    }

    pub fn task(&self) -> TaskKind {
        self.src.task()
    }

    pub fn src(&self) -> &Sample {
        &self.src
    }

    pub fn tgt(&self) -> &Sample {
        &self.tgt
    }

    pub fn src_lang(&self) -> &str {
        &self.src_lang
    }

    pub fn tgt_lang(&self) -> &str {
        &self.tgt_lang
    }

    pub fn to_record(&self) -> Value {
        serde_json::json!({
            "id": self.id(),
            "src_lang": self.src_lang,
            "tgt_lang": self.tgt_lang,
            "src": self.src.to_record(),
            "tgt": self.tgt.to_record(),
        })
    }

    pub fn from_record(task: TaskKind, record: &Value, default_id: &str) -> Result<Self, String> {
        let lang = |name: &str| {
            record
                .get(name)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(format!("missing field {name:?}"))
        };
        let side = |name: &str| record.get(name).ok_or(format!("missing field {name:?}"));
        let src = Sample::from_record(task, side("src")?, default_id)?;
        let tgt = Sample::from_record(task, side("tgt")?, default_id)?;
        ParallelPair::new(src, tgt, &lang("src_lang")?, &lang("tgt_lang")?).map_err(|e| e.to_string())
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads any JSON Lines file, handing each non-blank line to `parse` with its 1-based line number.
pub fn read_jsonl<T>(path: &Path, mut parse: impl FnMut(&Value, usize) -> Result<T, String>) -> Result<Vec<T>> {
    let file = File::open(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|source| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        let item = parse(&value, line_no).map_err(|message| CorpusError::Schema {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Writes one compact JSON value per line, `\n`-terminated.
pub fn write_jsonl<'a>(path: &Path, values: impl IntoIterator<Item = &'a Value>) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut writer = BufWriter::new(file);
    for value in values {
        serde_json::to_writer(&mut writer, value).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        writer.write_all(b"\n").map_err(io_error(path))?;
    }
    writer.flush().map_err(io_error(path))
}

/// Reads a task dataset. Records without an `id` get their 1-based line number.
pub fn read_dataset(path: &Path, task: TaskKind, language: LanguageTag) -> Result<Dataset> {
    let samples = read_jsonl(path, |value, line| Sample::from_record(task, value, &line.to_string()))?;
    Dataset::new(task, language, DatasetRole::Source, samples)
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let records: Vec<Value> = dataset.samples.iter().map(Sample::to_record).collect();
    write_jsonl(path, &records)
}

pub fn read_parallel_pairs(path: &Path, task: TaskKind) -> Result<Vec<ParallelPair>> {
    read_jsonl(path, |value, line| {
        ParallelPair::from_record(task, value, &line.to_string())
    })
}

pub fn write_parallel_pairs(pairs: &[ParallelPair], path: &Path) -> Result<()> {
    let records: Vec<Value> = pairs.iter().map(ParallelPair::to_record).collect();
    write_jsonl(path, &records)
}

/// Aligns two monolingual datasets by id into parallel pairs, in `src` order.
/// Ids present on only one side are skipped.
pub fn align_parallel(src: &Dataset, tgt: &Dataset) -> Result<Vec<ParallelPair>> {
    let by_id: std::collections::HashMap<&str, &Sample> = tgt.samples.iter().map(|s| (s.id(), s)).collect();
    src.samples
        .iter()
        .filter_map(|s| by_id.get(s.id()).map(|t| (s, *t)))
        .map(|(s, t)| ParallelPair::new(s.clone(), t.clone(), src.language.code(), tgt.language.code()))
        .collect()
}

/// Seeded uniform subset of `n` samples without replacement, kept in original order.
/// Returns the whole dataset when `n >= N`.
pub fn take_subset(dataset: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= dataset.len() {
        return dataset.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, dataset.len(), n).into_vec();
    indices.sort_unstable();
    dataset.with_samples(indices.into_iter().map(|i| dataset.samples[i].clone()).collect())
}

/// First `n` samples in file order.
pub fn take_head(dataset: &Dataset, n: usize) -> Dataset {
    dataset.with_samples(dataset.samples.iter().take(n).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn math(id: &str, answer: &str) -> Sample {
        Sample::Math(MathSample::new(id, "Q?", format!("Work.\n#### {answer}")).unwrap())
    }

    #[test]
    fn gsm8k_marker_sets_final_answer() {
        let s = MathSample::new(
            "0",
            "Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May. How many clips did Natalia sell altogether in April and May?",
            "Natalia sold 48/2 = 24 clips in May.\nNatalia sold 48+24 = 72 clips altogether in April and May.\n#### 72",
        )
        .unwrap();
        assert_eq!(s.final_answer(), "72");
    }

    #[test]
    fn last_marker_wins() {
        assert_eq!(parse_final_answer("#### 1\nmore\n#### 2").as_deref(), Some("2"));
        assert_eq!(parse_final_answer("no marker"), None);
        assert_eq!(parse_final_answer("#### "), None);
    }

    #[test]
    fn qa_span_is_char_exact() {
        assert!(QaSample::new("a", "北京是首都", "?", "首都", 3).is_ok());
        let err = QaSample::new("b", "北京是首都", "?", "首都", 2).unwrap_err();
        assert!(matches!(err, CorpusError::SpanMismatch { id, .. } if id == "b"));
        assert!(QaSample::new("c", "abc", "?", "", 3).is_ok());
        assert!(QaSample::new("d", "abc", "?", "", 4).is_err());
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("Neutral".parse::<NliLabel>().unwrap(), NliLabel::Neutral);
        assert_eq!(" ENTAILMENT ".parse::<NliLabel>().unwrap(), NliLabel::Entailment);
        assert!("maybe".parse::<NliLabel>().is_err());
    }

    #[test]
    fn language_tag_validation() {
        assert!(LanguageTag::new("DE", "German", Rational::ONE).is_err());
        assert!(LanguageTag::new("", "x", Rational::ONE).is_err());
        assert!(LanguageTag::new("de", "German", Rational::ZERO).is_err());
        assert_eq!(
            LanguageTag::builtin("zh").unwrap().char_weight(),
            Rational::from_integer(3)
        );
        assert_eq!(LanguageTag::builtin("th").unwrap().char_weight(), Rational::ONE);
        assert_eq!(LanguageTag::from_code("fr").unwrap().char_weight(), Rational::ONE);
    }

    #[test]
    fn dataset_rejects_duplicates_and_mixed_tasks() {
        let en = LanguageTag::english();
        let dup = Dataset::new(
            TaskKind::Math,
            en.clone(),
            DatasetRole::Source,
            vec![math("1", "2"), math("1", "3")],
        );
        assert!(matches!(dup, Err(CorpusError::DuplicateId(_))));
        let nli = Sample::Nli(NliSample::new("x", "p", "h", NliLabel::Neutral));
        let mixed = Dataset::new(TaskKind::Math, en, DatasetRole::Source, vec![math("1", "2"), nli]);
        assert!(matches!(mixed, Err(CorpusError::TaskMismatch { .. })));
    }

    #[test]
    fn read_assigns_line_ids_and_preserves_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"question\":\"a\",\"answer\":\"x\\n#### 1\"}\n{\"id\":\"k\",\"question\":\"b\",\"answer\":\"y\\n#### 2\"}\n",
        )
        .unwrap();
        let ds = read_dataset(&path, TaskKind::Math, LanguageTag::english()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples()[0].id(), "1");
        assert_eq!(ds.samples()[1].id(), "k");
    }

    #[test]
    fn read_reports_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"neutral\"}\n{oops\n",
        )
        .unwrap();
        let err = read_dataset(&path, TaskKind::Nli, LanguageTag::english()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }), "{err}");

        std::fs::write(&path, "{\"premise\":\"p\",\"hypothesis\":\"h\",\"label\":\"maybe\"}\n").unwrap();
        let err = read_dataset(&path, TaskKind::Nli, LanguageTag::english()).unwrap_err();
        assert!(matches!(err, CorpusError::Schema { line: 1, .. }), "{err}");

        std::fs::write(&path, "{\"premise\":\"p\",\"label\":\"neutral\"}\n").unwrap();
        let err = read_dataset(&path, TaskKind::Nli, LanguageTag::english()).unwrap_err();
        assert!(err.to_string().contains("hypothesis"), "{err}");
    }

    #[test]
    fn qa_span_mismatch_names_the_id() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("qa.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"q7\",\"context\":\"abcdef\",\"question\":\"?\",\"answer_text\":\"cd\",\"answer_start\":1}\n",
        )
        .unwrap();
        let err = read_dataset(&path, TaskKind::ExtractiveQa, LanguageTag::english()).unwrap_err();
        assert!(err.to_string().contains("q7"), "{err}");
    }

    #[test]
    fn write_read_round_trip_with_unicode() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("zh.jsonl");
        let zh = LanguageTag::builtin("zh").unwrap();
        let ds = Dataset::new(
            TaskKind::Math,
            zh.clone(),
            DatasetRole::Source,
            vec![Sample::Math(
                MathSample::new("1", "娜塔莉亚卖了多少？", "她卖了72个。\n#### 72").unwrap(),
            )],
        )
        .unwrap();
        write_dataset(&ds, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(std::str::from_utf8(&bytes).unwrap().contains("娜塔莉亚"));
        assert_eq!(read_dataset(&path, TaskKind::Math, zh).unwrap(), ds);
    }

    #[test]
    fn empty_dataset_writes_empty_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        write_dataset(
            &Dataset::empty(TaskKind::Nli, LanguageTag::english(), DatasetRole::Source),
            &path,
        )
        .unwrap();
        assert_eq!(std::fs::read(&path).unwrap().len(), 0);
    }

    #[test]
    fn subsets_are_deterministic() {
        let samples: Vec<Sample> = (0..50).map(|i| math(&i.to_string(), "1")).collect();
        let ds = Dataset::new(TaskKind::Math, LanguageTag::english(), DatasetRole::Source, samples).unwrap();
        assert_eq!(take_subset(&ds, 0, 1).len(), 0);
        let a = take_subset(&ds, 10, 42);
        let b = take_subset(&ds, 10, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_ne!(a, take_subset(&ds, 10, 43));
        assert_eq!(take_subset(&ds, 50, 7), ds);
        assert_eq!(take_subset(&ds, 500, 7), ds);
        assert_eq!(take_head(&ds, 3).samples()[2].id(), "2");
    }

    #[test]
    fn parallel_pair_invariants() {
        assert!(ParallelPair::new(math("1", "2"), math("1", "2"), "en", "de").is_ok());
        assert!(ParallelPair::new(math("1", "2"), math("2", "2"), "en", "de").is_err());
        assert!(ParallelPair::new(math("1", "2"), math("1", "2"), "en", "en").is_err());
    }
}
