//! Field-wise self-translation of task datasets.
//!
//! Every translatable field is translated on its own with a per-field
//! few-shot bank. QA contexts are translated sentence by sentence; the
//! sentence holding the answer carries `<answer>` tags so the span can be
//! located again in the translation. Nothing here filters: results come back
//! as [`Candidate`]s with their evidence attached and `filter` decides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    parse_final_answer, Dataset, LanguageTag, MathSample, NliSample, ParallelPair, QaSample, Sample, TaskKind,
    ANSWER_MARKER,
};
use crate::gateway::{prompt_sha256, Gateway, GatewayError, GatewayStats, GenerationRequest, GenerationResponse};
use crate::prompting::{build_translation_prompt_with, DelimiterPolicy, FewShotBank, PromptError};

pub mod sentences;
pub mod span;

pub use sentences::{sentence_spans, split_sentences};
pub use span::{extract_marked_span, mark_answer_span, ExtractedSpan, SpanError, SpanMarking};

pub mod notes {
    pub const EMPTY_SOURCE: &str = "empty_source";
    pub const DELIMITER_COLLISION: &str = "delimiter_collision";
    pub const ANSWER_RESTITCHED: &str = "answer_marker_restitched";
    pub const SPAN_MISSING_TAG: &str = "span_missing_tag";
    pub const SPAN_DUPLICATE_TAG: &str = "span_duplicate_tag";
    pub const SPAN_CROSSED_TAG: &str = "span_crossed_tag";
    pub const SPAN_OUT_OF_CONTEXT: &str = "span_outside_sentences";
    pub const GATEWAY_ERROR_PREFIX: &str = "gateway_error:";
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranslateError {
    #[error("no few-shot bank for field {0:?}")]
    MissingBank(String),
    #[error("bank for field {field:?} is {found}, expected {expected}")]
    BankMismatch {
        field: String,
        expected: String,
        found: String,
    },
    #[error("dataset role must be source, got {0}")]
    NotSource(String),
    #[error("translate-test is not supported for {0}: outputs would change language")]
    UnsupportedTask(TaskKind),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldBudget {
    pub task: TaskKind,
    pub max_new_tokens: u32,
}

/// Maximum new tokens per translated field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldBudgets {
    task: TaskKind,
    tokens: BTreeMap<String, u32>,
}

impl FieldBudgets {
    /// QA context 512, QA question 256, NLI premise/hypothesis 256, math question/answer 512.
    pub fn defaults(task: TaskKind) -> Self {
        let pairs: &[(&str, u32)] = match task {
            TaskKind::ExtractiveQa => &[("context", 512), ("question", 256)],
            TaskKind::Nli => &[("premise", 256), ("hypothesis", 256)],
            TaskKind::Math => &[("question", 512), ("answer", 512)],
        };
        FieldBudgets {
            task,
            tokens: pairs.iter().map(|(f, n)| (f.to_string(), *n)).collect(),
        }
    }

    pub fn with_override(mut self, field: &str, max_new_tokens: u32) -> Self {
        self.tokens.insert(field.to_string(), max_new_tokens.max(1));
        self
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn get(&self, field: &str) -> u32 {
        self.tokens.get(field).copied().unwrap_or(256)
    }

    pub fn budget(&self, field: &str) -> FieldBudget {
        FieldBudget {
            task: self.task,
            max_new_tokens: self.get(field),
        }
    }
}

/// Few-shot banks keyed by field name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankSet {
    banks: BTreeMap<String, FewShotBank>,
    policy: DelimiterPolicy,
}

impl BankSet {
    pub fn new(banks: impl IntoIterator<Item = FewShotBank>) -> Self {
        BankSet {
            banks: banks.into_iter().map(|b| (b.field_name().to_string(), b)).collect(),
            policy: DelimiterPolicy::Reject,
        }
    }

    pub fn with_delimiter_policy(mut self, policy: DelimiterPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn get(&self, field: &str) -> Result<&FewShotBank, TranslateError> {
        self.banks
            .get(field)
            .ok_or_else(|| TranslateError::MissingBank(field.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FewShotBank> {
        self.banks.values()
    }

    /// Checks that every field in `fields` has a bank for `task` translating into `tgt`.
    pub fn check_covers(&self, task: TaskKind, fields: &[&str], tgt: &LanguageTag) -> Result<(), TranslateError> {
        for field in fields {
            let bank = self.get(field)?;
            if bank.task() != task || bank.tgt_lang().code() != tgt.code() {
                return Err(TranslateError::BankMismatch {
                    field: field.to_string(),
                    expected: format!("{task} into {}", tgt.code()),
                    found: format!("{} into {}", bank.task(), bank.tgt_lang().code()),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    pub sample_id: String,
    pub field_name: String,
    /// Sentence index within the field, for fields translated sentence by sentence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    pub source_text: String,
    /// Generated text, closing delimiter excluded.
    pub generated_text: String,
    pub terminated_by_stop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub prompt_bytes: usize,
    pub notes: Vec<String>,
}

/// A defect that makes a translated field unusable regardless of its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldDefect {
    DelimiterCollision,
    SpanMissingTag,
    SpanDuplicateTag,
    SpanCrossedTag,
}

impl From<&SpanError> for FieldDefect {
    fn from(err: &SpanError) -> Self {
        match err {
            SpanError::DuplicateTag => FieldDefect::SpanDuplicateTag,
            SpanError::CrossedTag => FieldDefect::SpanCrossedTag,
            _ => FieldDefect::SpanMissingTag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldTranslation {
    pub field_name: String,
    pub source_text: String,
    /// The whole translated field, tags removed; empty if nothing usable came back.
    pub translated_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<FieldDefect>,
    pub outcomes: Vec<TranslationOutcome>,
}

impl FieldTranslation {
    pub fn complete(&self) -> bool {
        self.outcomes.iter().all(|o| o.terminated_by_stop)
    }
}

/// One translated sample with its per-field evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub source: Sample,
    /// Present unless a field defect left no valid target sample.
    pub target: Option<Sample>,
    pub src_lang: LanguageTag,
    pub tgt_lang: LanguageTag,
    pub fields: Vec<FieldTranslation>,
}

impl Candidate {
    pub fn id(&self) -> &str {
        self.source.id()
    }

    pub fn pair(&self) -> Option<ParallelPair> {
        let target = self.target.clone()?;
        ParallelPair::new(self.source.clone(), target, self.src_lang.code(), self.tgt_lang.code()).ok()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &TranslationOutcome> {
        self.fields.iter().flat_map(|f| f.outcomes.iter())
    }

    /// True if any field carries a defect or an unterminated generation.
    pub fn rejectable(&self) -> bool {
        self.target.is_none() || self.fields.iter().any(|f| f.defect.is_some() || !f.complete())
    }

    pub fn to_record(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id(),
            "src_lang": self.src_lang.code(),
            "tgt_lang": self.tgt_lang.code(),
            "src": self.source.to_record(),
            "tgt": self.target.as_ref().map(Sample::to_record),
            "fields": self.fields,
        })
    }
}

/// One gateway call planned for a sample.
#[derive(Debug, Clone)]
struct SegmentPlan {
    field: &'static str,
    segment: Option<usize>,
    source_text: String,
    prompt: Result<String, PromptError>,
    max_new_tokens: u32,
}

impl SegmentPlan {
    fn request(&self) -> Option<GenerationRequest> {
        let prompt = self.prompt.as_ref().ok()?;
        Some(GenerationRequest {
            prompt: prompt.clone(),
            max_new_tokens: self.max_new_tokens,
            stop_sequences: vec![crate::prompting::STOP_SEQUENCE.to_string()],
            temperature: 0.0,
        })
    }
}

#[derive(Debug, Clone)]
struct SamplePlan {
    sample: Sample,
    segments: Vec<SegmentPlan>,
    /// QA only: index into `segments` of the marked sentence, or why marking failed.
    marked_segment: Option<Result<usize, &'static str>>,
}

fn plan_segment(
    field: &'static str,
    segment: Option<usize>,
    text: &str,
    bank: &FewShotBank,
    policy: DelimiterPolicy,
    max_new_tokens: u32,
) -> SegmentPlan {
    let prompt = build_translation_prompt_with(bank, text, policy).map(|p| p.text);
    SegmentPlan {
        field,
        segment,
        source_text: text.to_string(),
        prompt,
        max_new_tokens,
    }
}

fn plan_sample(
    sample: &Sample,
    fields: &[&'static str],
    banks: &BankSet,
    budgets: &FieldBudgets,
) -> Result<SamplePlan, TranslateError> {
    let mut segments = Vec::new();
    let mut marked_segment = None;
    for &field in fields {
        let bank = banks.get(field)?;
        let tokens = budgets.get(field);
        match (sample, field) {
            (Sample::Qa(qa), "context") => {
                let (segs, marked) = plan_qa_context(qa, bank, banks.policy, tokens);
                marked_segment = Some(marked.map(|i| segments.len() + i));
                segments.extend(segs);
            }
            _ => {
                let text = sample.field(field).unwrap_or_default();
                segments.push(plan_segment(field, None, text, bank, banks.policy, tokens));
            }
        }
    }
    Ok(SamplePlan {
        sample: sample.clone(),
        segments,
        marked_segment,
    })
}

/// Splits a QA context into sentences and marks the one(s) holding the answer.
fn plan_qa_context(
    qa: &QaSample,
    bank: &FewShotBank,
    policy: DelimiterPolicy,
    tokens: u32,
) -> (Vec<SegmentPlan>, Result<usize, &'static str>) {
    let chars: Vec<char> = qa.context().chars().collect();
    let start = qa.answer_start();
    let len = qa.answer_text().chars().count();
    let end = start + len;
    let spans = sentence_spans(qa.context());
    let hits: Vec<usize> = spans
        .iter()
        .enumerate()
        .filter(|(_, r)| r.start < end.max(start + 1) && start < r.end)
        .map(|(i, _)| i)
        .collect();
    let mut segments = Vec::new();
    let mut marked = Err(notes::SPAN_OUT_OF_CONTEXT);
    let mut i = 0;
    while i < spans.len() {
        let idx = segments.len();
        if hits.first() == Some(&i) {
            let last = *hits.last().expect("non-empty");
            let window = spans[i].start..spans[last].end;
            let text: String = chars[window.clone()].iter().collect();
            let text = match mark_answer_span(&text, start - window.start, len) {
                Ok(m) => {
                    marked = Ok(idx);
                    m.marked_text
                }
                Err(_) => {
                    marked = Err(notes::SPAN_MISSING_TAG);
                    text
                }
            };
            segments.push(plan_segment("context", Some(idx), &text, bank, policy, tokens));
            i = last + 1;
        } else {
            let text: String = chars[spans[i].clone()].iter().collect();
            segments.push(plan_segment("context", Some(idx), &text, bank, policy, tokens));
            i += 1;
        }
    }
    (segments, marked)
}

fn outcome_for(
    sample_id: &str,
    plan: &SegmentPlan,
    response: Option<&Result<GenerationResponse, GatewayError>>,
) -> TranslationOutcome {
    let mut outcome = TranslationOutcome {
        sample_id: sample_id.to_string(),
        field_name: plan.field.to_string(),
        segment: plan.segment,
        source_text: plan.source_text.clone(),
        generated_text: String::new(),
        terminated_by_stop: false,
        prompt_sha256: plan.prompt.as_ref().ok().map(|p| prompt_sha256(p)),
        prompt_bytes: plan.prompt.as_ref().map(|p| p.len()).unwrap_or(0),
        notes: Vec::new(),
    };
    match (&plan.prompt, response) {
        (Err(PromptError::EmptySource), _) => {
            outcome.terminated_by_stop = true;
            outcome.notes.push(notes::EMPTY_SOURCE.to_string());
        }
        (Err(_), _) => outcome.notes.push(notes::DELIMITER_COLLISION.to_string()),
        (Ok(_), Some(Ok(response))) => {
            outcome.generated_text = response.text.clone();
            outcome.terminated_by_stop = response.terminated_by_stop;
        }
        (Ok(_), Some(Err(err))) => outcome
            .notes
            .push(format!("{}{}", notes::GATEWAY_ERROR_PREFIX, err.kind())),
        (Ok(_), None) => unreachable!("every prompt gets a response"),
    }
    outcome
}

/// Turns a sample plan plus its gateway responses into a candidate.
fn assemble(
    plan: &SamplePlan,
    responses: &[Option<Result<GenerationResponse, GatewayError>>],
    fields: &[&'static str],
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
) -> Candidate {
    let id = plan.sample.id();
    let outcomes: Vec<TranslationOutcome> = plan
        .segments
        .iter()
        .zip(responses)
        .map(|(seg, resp)| outcome_for(id, seg, resp.as_ref()))
        .collect();

    let mut translated: BTreeMap<&str, FieldTranslation> = BTreeMap::new();
    for &field in fields {
        let field_outcomes: Vec<TranslationOutcome> =
            outcomes.iter().filter(|o| o.field_name == field).cloned().collect();
        let defect = field_outcomes
            .iter()
            .any(|o| o.notes.iter().any(|n| n == notes::DELIMITER_COLLISION))
            .then_some(FieldDefect::DelimiterCollision);
        let joined = field_outcomes
            .iter()
            .map(|o| o.generated_text.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        translated.insert(
            field,
            FieldTranslation {
                field_name: field.to_string(),
                source_text: plan.sample.field(field).unwrap_or_default().to_string(),
                translated_text: if field_outcomes.len() == 1 {
                    field_outcomes[0].generated_text.clone()
                } else {
                    joined
                },
                defect,
                outcomes: field_outcomes,
            },
        );
    }

    let target = build_target(plan, &mut translated);
    Candidate {
        source: plan.sample.clone(),
        target,
        src_lang: src_lang.clone(),
        tgt_lang: tgt_lang.clone(),
        fields: fields
            .iter()
            .map(|f| translated.remove(f).expect("planned field"))
            .collect(),
    }
}

fn text_of<'a>(fields: &'a BTreeMap<&str, FieldTranslation>, name: &str) -> &'a str {
    fields.get(name).map(|f| f.translated_text.as_str()).unwrap_or("")
}

fn build_target(plan: &SamplePlan, fields: &mut BTreeMap<&str, FieldTranslation>) -> Option<Sample> {
    let id = plan.sample.id().to_string();
    match &plan.sample {
        Sample::Math(src) => {
            let question = text_of(fields, "question").to_string();
            let answer = fields.get_mut("answer").expect("math answer planned");
            let rationale = anchor_final_answer(&answer.translated_text, src.final_answer());
            if rationale != answer.translated_text {
                if let Some(o) = answer.outcomes.last_mut() {
                    o.notes.push(notes::ANSWER_RESTITCHED.into());
                }
                answer.translated_text = rationale.clone();
            }
            MathSample::new(id, question, rationale).ok().map(Sample::Math)
        }
        Sample::Nli(src) => Some(Sample::Nli(NliSample::new(
            id,
            text_of(fields, "premise"),
            text_of(fields, "hypothesis"),
            src.label(),
        ))),
        Sample::Qa(_) => {
            let question = text_of(fields, "question").to_string();
            let context = fields.get_mut("context").expect("qa context planned");
            let marked = match plan.marked_segment {
                Some(Ok(_)) => Ok(()),
                Some(Err(_)) | None => Err(SpanError::MissingTag),
            };
            let extracted = marked.and_then(|()| extract_marked_span(&context.translated_text));
            match extracted {
                Ok(span) => {
                    context.translated_text = span.clean_text.clone();
                    QaSample::new(id, span.clean_text, question, span.span_text, span.start)
                        .ok()
                        .map(Sample::Qa)
                }
                Err(err) => {
                    if context.defect.is_none() {
                        context.defect = Some(FieldDefect::from(&err));
                    }
                    let note = match FieldDefect::from(&err) {
                        FieldDefect::SpanDuplicateTag => notes::SPAN_DUPLICATE_TAG,
                        FieldDefect::SpanCrossedTag => notes::SPAN_CROSSED_TAG,
                        _ => notes::SPAN_MISSING_TAG,
                    };
                    if let Some(o) = context
                        .outcomes
                        .iter_mut()
                        .find(|o| o.source_text.contains(span::ANSWER_OPEN))
                    {
                        o.notes.push(note.to_string());
                    } else if let Some(o) = context.outcomes.first_mut() {
                        o.notes.push(note.to_string());
                    }
                    None
                }
            }
        }
    }
}

/// Makes the rationale end in `#### <final_answer>`, replacing a damaged tail.
pub fn anchor_final_answer(rationale: &str, final_answer: &str) -> String {
    if parse_final_answer(rationale).as_deref() == Some(final_answer) {
        return rationale.to_string();
    }
    let marker = ANSWER_MARKER.trim_end();
    let body = match rationale.rfind(marker) {
        Some(pos) => &rationale[..pos],
        None => rationale,
    };
    let body = body.trim_end();
    if body.is_empty() {
        format!("{ANSWER_MARKER}{final_answer}")
    } else {
        format!("{body}\n{ANSWER_MARKER}{final_answer}")
    }
}

/// Plans, dispatches in one batch, and assembles candidates in input order.
fn run_plans(
    plans: &[SamplePlan],
    fields: &[&'static str],
    gateway: &Gateway,
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
) -> Result<Vec<Candidate>, TranslateError> {
    let mut requests = Vec::new();
    let mut slots: Vec<Vec<Option<usize>>> = Vec::with_capacity(plans.len());
    for plan in plans {
        let mut sample_slots = Vec::with_capacity(plan.segments.len());
        for seg in &plan.segments {
            match seg.request() {
                Some(request) => {
                    sample_slots.push(Some(requests.len()));
                    requests.push(request);
                }
                None => sample_slots.push(None),
            }
        }
        slots.push(sample_slots);
    }
    let mut responses: Vec<Option<Result<GenerationResponse, GatewayError>>> = if requests.is_empty() {
        Vec::new()
    } else {
        gateway.generate_batch(&requests)?.into_iter().map(Some).collect()
    };
    Ok(plans
        .iter()
        .zip(slots)
        .map(|(plan, sample_slots)| {
            let resp: Vec<_> = sample_slots
                .into_iter()
                .map(|slot| slot.and_then(|i| responses[i].take()))
                .collect();
            assemble(plan, &resp, fields, src_lang, tgt_lang)
        })
        .collect())
}

/// Translates one field value with a single gateway call.
pub fn translate_field(
    sample_id: &str,
    field_name: &'static str,
    text: &str,
    bank: &FewShotBank,
    budget: FieldBudget,
    gateway: &Gateway,
) -> TranslationOutcome {
    let plan = plan_segment(
        field_name,
        None,
        text,
        bank,
        DelimiterPolicy::Reject,
        budget.max_new_tokens,
    );
    let response = plan.request().map(|r| gateway.generate(&r));
    outcome_for(sample_id, &plan, response.as_ref())
}

/// Translates every translatable field of one sample.
pub fn translate_sample(
    sample: &Sample,
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
    banks: &BankSet,
    budgets: &FieldBudgets,
    gateway: &Gateway,
) -> Result<Candidate, TranslateError> {
    let fields = sample.task().translatable_fields();
    banks.check_covers(sample.task(), fields, tgt_lang)?;
    let plan = plan_sample(sample, fields, banks, budgets)?;
    Ok(
        run_plans(std::slice::from_ref(&plan), fields, gateway, src_lang, tgt_lang)?
            .pop()
            .expect("one candidate"),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    pub prompt_sha256: Option<String>,
    pub terminated_by_stop: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub samples: usize,
    pub calls: usize,
    pub terminated_by_stop: usize,
    pub unterminated: usize,
    pub rejectable_samples: usize,
    pub notes: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationManifest {
    pub task: TaskKind,
    pub src_lang: String,
    pub tgt_lang: String,
    pub backend: String,
    pub records: Vec<ManifestRecord>,
    pub counts: ManifestCounts,
    pub gateway: GatewayStats,
}

impl TranslationManifest {
    fn build(
        task: TaskKind,
        src: &LanguageTag,
        tgt: &LanguageTag,
        gateway: &Gateway,
        candidates: &[Candidate],
    ) -> Self {
        let mut counts = ManifestCounts {
            samples: candidates.len(),
            ..ManifestCounts::default()
        };
        let mut records = Vec::new();
        for candidate in candidates {
            if candidate.rejectable() {
                counts.rejectable_samples += 1;
            }
            for o in candidate.outcomes() {
                if o.prompt_sha256.is_some() {
                    counts.calls += 1;
                }
                if o.terminated_by_stop {
                    counts.terminated_by_stop += 1;
                } else {
                    counts.unterminated += 1;
                }
                for note in &o.notes {
                    *counts.notes.entry(note.clone()).or_default() += 1;
                }
                records.push(ManifestRecord {
                    sample_id: o.sample_id.clone(),
                    field: o.field_name.clone(),
                    segment: o.segment,
                    prompt_sha256: o.prompt_sha256.clone(),
                    terminated_by_stop: o.terminated_by_stop,
                    notes: o.notes.clone(),
                });
            }
        }
        TranslationManifest {
            task,
            src_lang: src.code().to_string(),
            tgt_lang: tgt.code().to_string(),
            backend: gateway.backend_name().to_string(),
            records,
            counts,
            gateway: gateway.stats(),
        }
    }
}

/// Translates a source dataset into `tgt`, one candidate per sample in order.
pub fn translate_dataset(
    dataset: &Dataset,
    tgt: &LanguageTag,
    banks: &BankSet,
    budgets: &FieldBudgets,
    gateway: &Gateway,
) -> Result<(Vec<Candidate>, TranslationManifest), TranslateError> {
    if dataset.role() != crate::corpus::DatasetRole::Source {
        return Err(TranslateError::NotSource(dataset.role().to_string()));
    }
    let fields = dataset.task().translatable_fields();
    banks.check_covers(dataset.task(), fields, tgt)?;
    let plans = dataset
        .samples()
        .iter()
        .map(|s| plan_sample(s, fields, banks, budgets))
        .collect::<Result<Vec<_>, _>>()?;
    let candidates = run_plans(&plans, fields, gateway, dataset.language(), tgt)?;
    let manifest = TranslationManifest::build(dataset.task(), dataset.language(), tgt, gateway, &candidates);
    Ok((candidates, manifest))
}

/// Translates only the input fields of an evaluation set into `to`.
///
/// Labels and reference answers are left untouched. QA is refused because its
/// gold answers are spans of the untranslated context.
pub fn translate_test_inputs(
    dataset: &Dataset,
    to: &LanguageTag,
    banks: &BankSet,
    budgets: &FieldBudgets,
    gateway: &Gateway,
) -> Result<(Dataset, Vec<TranslationOutcome>), TranslateError> {
    let task = dataset.task();
    if task == TaskKind::ExtractiveQa {
        return Err(TranslateError::UnsupportedTask(task));
    }
    let fields = task.input_fields();
    banks.check_covers(task, fields, to)?;
    let plans = dataset
        .samples()
        .iter()
        .map(|s| plan_sample(s, fields, banks, budgets))
        .collect::<Result<Vec<_>, _>>()?;
    let mut requests = Vec::new();
    for plan in &plans {
        requests.extend(plan.segments.iter().filter_map(SegmentPlan::request));
    }
    let mut responses = if requests.is_empty() {
        Vec::new().into_iter()
    } else {
        gateway.generate_batch(&requests)?.into_iter()
    };
    let mut samples = Vec::with_capacity(plans.len());
    let mut outcomes = Vec::new();
    for plan in &plans {
        let mut texts: BTreeMap<&str, String> = BTreeMap::new();
        for seg in &plan.segments {
            let response = seg
                .request()
                .map(|_| responses.next().expect("one response per request"));
            let outcome = outcome_for(plan.sample.id(), seg, response.as_ref());
            let text = if outcome.prompt_sha256.is_some() {
                outcome.generated_text.clone()
            } else {
                seg.source_text.clone()
            };
            texts.insert(seg.field, text);
            outcomes.push(outcome);
        }
        let id = plan.sample.id().to_string();
        let sample = match &plan.sample {
            Sample::Math(m) => Sample::Math(
                MathSample::new(id, texts.remove("question").unwrap_or_default(), m.rationale())
                    .expect("rationale unchanged"),
            ),
            Sample::Nli(n) => Sample::Nli(NliSample::new(
                id,
                texts.remove("premise").unwrap_or_default(),
                texts.remove("hypothesis").unwrap_or_default(),
                n.label(),
            )),
            Sample::Qa(_) => unreachable!("QA refused above"),
        };
        samples.push(sample);
    }
    let translated = Dataset::new(task, to.clone(), dataset.role(), samples)
        .expect("ids and task preserved")
        .with_provenance("translate-test");
    Ok((translated, outcomes))
}
