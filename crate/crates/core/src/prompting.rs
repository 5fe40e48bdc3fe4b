//! Few-shot translation prompts and the answer-language instruction.
//!
//! A translation prompt alternates source and target texts, each line
//! prefixed with its lowercase language code and wrapped in backticks:
//!
//! ```text
//! en: `Hello`
//! de: `Hallo`
//!
//! en: `Good morning`
//! de: `
//! ```
//!
//! Generation continues after the dangling backtick and stops at the next one.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageTag, ParallelPair, Sample, TaskKind};
use crate::translate::sentences::sentence_spans;
use crate::translate::span::{mark_answer_span, ANSWER_CLOSE, ANSWER_OPEN};

pub const DELIMITER: char = '`';
pub const STOP_SEQUENCE: &str = "`";
pub const DEFAULT_SHOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("few-shot bank for {0:?} has no pairs")]
    EmptyBank(String),
    #[error("source text is empty")]
    EmptySource,
    #[error("source text contains a raw backtick")]
    DelimiterInSource,
    #[error("few-shot pair {index} of bank {field:?} contains a raw backtick")]
    DelimiterInBank { field: String, index: usize },
    #[error("asked for {k} few-shot pairs but only {available} usable pairs exist")]
    NotEnoughPairs { k: usize, available: usize },
    #[error("field {field:?} is not translatable for task {task}")]
    FieldAbsent { field: String, task: TaskKind },
    #[error("few-shot sample {id}: {message}")]
    BadShot { id: String, message: String },
    #[error("{0}")]
    Io(String),
}

/// What to do with a backtick inside text that must go between delimiters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelimiterPolicy {
    #[default]
    Reject,
    /// Replace each backtick with an apostrophe before rendering.
    Substitute,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotBank {
    task: TaskKind,
    field_name: String,
    pairs: Vec<(String, String)>,
    src_lang: LanguageTag,
    tgt_lang: LanguageTag,
}

impl FewShotBank {
    pub fn new(
        task: TaskKind,
        field_name: impl Into<String>,
        pairs: Vec<(String, String)>,
        src_lang: LanguageTag,
        tgt_lang: LanguageTag,
    ) -> Result<Self, PromptError> {
        let field_name = field_name.into();
        if !task.translatable_fields().contains(&field_name.as_str()) {
            return Err(PromptError::FieldAbsent {
                field: field_name,
                task,
            });
        }
        if pairs.is_empty() {
            return Err(PromptError::EmptyBank(field_name));
        }
        if let Some(index) = pairs
            .iter()
            .position(|(s, t)| s.contains(DELIMITER) || t.contains(DELIMITER))
        {
            return Err(PromptError::DelimiterInBank {
                field: field_name,
                index,
            });
        }
        Ok(FewShotBank {
            task,
            field_name,
            pairs,
            src_lang,
            tgt_lang,
        })
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn src_lang(&self) -> &LanguageTag {
        &self.src_lang
    }

    pub fn tgt_lang(&self) -> &LanguageTag {
        &self.tgt_lang
    }

    /// Loads a bank from its JSON file form.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        let file: BankFile =
            serde_json::from_str(&text).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        file.into_bank()
    }

    pub fn to_json(&self) -> String {
        let file = BankFile {
            task: self.task,
            field_name: self.field_name.clone(),
            src_lang: self.src_lang.code().to_string(),
            tgt_lang: self.tgt_lang.code().to_string(),
            pairs: self
                .pairs
                .iter()
                .map(|(src, tgt)| BankPair {
                    src: src.clone(),
                    tgt: tgt.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("bank serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    task: TaskKind,
    field_name: String,
    src_lang: String,
    tgt_lang: String,
    pairs: Vec<BankPair>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BankPair {
    src: String,
    tgt: String,
}

impl BankFile {
    fn into_bank(self) -> Result<FewShotBank, PromptError> {
        let lang = |code: &str| LanguageTag::from_code(code).map_err(|e| PromptError::Io(e.to_string()));
        FewShotBank::new(
            self.task,
            self.field_name,
            self.pairs.into_iter().map(|p| (p.src, p.tgt)).collect(),
            lang(&self.src_lang)?,
            lang(&self.tgt_lang)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub stop_sequence: String,
}

/// Renders the few-shot translation prompt for `source_text`, rejecting raw backticks.
pub fn build_translation_prompt(bank: &FewShotBank, source_text: &str) -> Result<RenderedPrompt, PromptError> {
    build_translation_prompt_with(bank, source_text, DelimiterPolicy::Reject)
}

pub fn build_translation_prompt_with(
    bank: &FewShotBank,
    source_text: &str,
    policy: DelimiterPolicy,
) -> Result<RenderedPrompt, PromptError> {
    if source_text.is_empty() {
        return Err(PromptError::EmptySource);
    }
    let source: std::borrow::Cow<'_, str> = if source_text.contains(DELIMITER) {
        match policy {
            DelimiterPolicy::Reject => return Err(PromptError::DelimiterInSource),
            DelimiterPolicy::Substitute => source_text.replace(DELIMITER, "'").into(),
        }
    } else {
        source_text.into()
    };
    let src = bank.src_lang.code();
    let tgt = bank.tgt_lang.code();
    let mut text = String::new();
    for (s, t) in &bank.pairs {
        text.push_str(&format!("{src}: `{s}`\n{tgt}: `{t}`\n\n"));
    }
    text.push_str(&format!("{src}: `{source}`\n{tgt}: `"));
    Ok(RenderedPrompt {
        text,
        stop_sequence: STOP_SEQUENCE.to_string(),
    })
}

/// Language code → instruction string, supplied by configuration.
pub type InstructionTable = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub text: String,
    /// True when the table had no entry and the English template was used.
    pub fallback: bool,
}

/// The "answer in language X" instruction for `tgt`, falling back to English.
pub fn render_code_switch_instruction(tgt: &LanguageTag, table: &InstructionTable) -> Instruction {
    match table.get(tgt.code()) {
        Some(text) => Instruction {
            text: text.clone(),
            fallback: false,
        },
        None => Instruction {
            text: format!("Please answer in {}.", tgt.display_name()),
            fallback: true,
        },
    }
}

/// Picks `k` parallel pairs with a fixed seed, in their original order.
///
/// Pairs whose translatable fields contain a backtick cannot be rendered and
/// are never picked. The same seed picks the same pairs for every field, so
/// per-field banks stay aligned.
pub fn sample_few_shot_pairs(
    parallel: &[ParallelPair],
    k: usize,
    seed: u64,
) -> Result<Vec<&ParallelPair>, PromptError> {
    let usable: Vec<&ParallelPair> = parallel.iter().filter(|p| renderable(p)).collect();
    if k > usable.len() {
        return Err(PromptError::NotEnoughPairs {
            k,
            available: usable.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, usable.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| usable[i]).collect())
}

fn renderable(pair: &ParallelPair) -> bool {
    let fields = pair.task().translatable_fields();
    [pair.src(), pair.tgt()]
        .iter()
        .all(|s| fields.iter().all(|f| !s.field(f).unwrap_or("").contains(DELIMITER)))
}

/// Builds the bank for one field from already-picked pairs.
///
/// For the QA `context` field the shots are the single sentences that carry
/// the marked answer span, since contexts are translated sentence by sentence.
pub fn bank_from_pairs(pairs: &[&ParallelPair], field_name: &str) -> Result<FewShotBank, PromptError> {
    let first = pairs
        .first()
        .ok_or_else(|| PromptError::EmptyBank(field_name.to_string()))?;
    let task = first.task();
    if !task.translatable_fields().contains(&field_name) {
        return Err(PromptError::FieldAbsent {
            field: field_name.to_string(),
            task,
        });
    }
    let mut texts = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let extract = |s: &Sample| -> Result<String, PromptError> {
            if task == TaskKind::ExtractiveQa && field_name == "context" {
                marked_answer_sentence(s)
            } else {
                Ok(s.field(field_name).unwrap_or_default().to_string())
            }
        };
        texts.push((extract(pair.src())?, extract(pair.tgt())?));
    }
    let lang = |code: &str| {
        LanguageTag::from_code(code).map_err(|e| PromptError::BadShot {
            id: first.id().to_string(),
            message: e.to_string(),
        })
    };
    FewShotBank::new(
        task,
        field_name,
        texts,
        lang(first.src_lang())?,
        lang(first.tgt_lang())?,
    )
}

pub fn sample_few_shots(
    parallel: &[ParallelPair],
    field_name: &str,
    k: usize,
    seed: u64,
) -> Result<FewShotBank, PromptError> {
    if let Some(first) = parallel.first() {
        if !first.task().translatable_fields().contains(&field_name) {
            return Err(PromptError::FieldAbsent {
                field: field_name.to_string(),
                task: first.task(),
            });
        }
    }
    let picked = sample_few_shot_pairs(parallel, k, seed)?;
    bank_from_pairs(&picked, field_name)
}

/// The context sentence(s) around the answer span, with the span tagged.
fn marked_answer_sentence(sample: &Sample) -> Result<String, PromptError> {
    let Sample::Qa(qa) = sample else {
        unreachable!("only called for QA samples")
    };
    let bad = |message: String| PromptError::BadShot {
        id: qa.id().to_string(),
        message,
    };
    let answer_len = qa.answer_text().chars().count();
    let start = qa.answer_start();
    let end = start + answer_len;
    let spans = sentence_spans(qa.context());
    let covering: Vec<_> = spans
        .iter()
        .filter(|r| r.start < end.max(start + 1) && start < r.end)
        .collect();
    let (Some(first), Some(last)) = (covering.first(), covering.last()) else {
        return Err(bad("answer span lies outside every sentence".into()));
    };
    let window: String = qa
        .context()
        .chars()
        .skip(first.start)
        .take(last.end - first.start)
        .collect();
    let marked = mark_answer_span(&window, start - first.start, answer_len).map_err(|e| bad(e.to_string()))?;
    debug_assert!(marked.marked_text.contains(ANSWER_OPEN) && marked.marked_text.contains(ANSWER_CLOSE));
    Ok(marked.marked_text)
}
