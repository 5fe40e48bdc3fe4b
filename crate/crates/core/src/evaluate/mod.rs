//! Translation quality, task accuracy and significance.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{NliLabel, ANSWER_MARKER};
use crate::rational::Rational;

pub mod bleu;
pub mod tokenize;
pub mod welch;

pub use bleu::{corpus_bleu, BleuScore, BleuTokenizer, Smoothing};
pub use tokenize::{tokenize_13a, tokenize_char, tokenize_zh};
pub use welch::{welch_t_test, SignificanceResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown tokenizer {0:?}; expected 13a, zh or char")]
    UnknownTokenizer(String),
    #[error("unknown smoothing {0:?}; expected none, exp, floor or add-k")]
    UnknownSmoothing(String),
    #[error("no number found in output")]
    NoNumber,
    #[error("no label keyword found in output")]
    NoLabel,
    #[error("sample {sample} has {n} observation(s); at least 2 are required")]
    TooFewObservations { sample: String, n: usize },
    #[error("sample {0} contains a non-finite value")]
    NonFinite(String),
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:[0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.[0-9]+)?").unwrap());

fn clean_number(raw: &str) -> String {
    raw.trim_start_matches('+').replace(',', "")
}

/// The answer number in a model output.
///
/// The first number after the last `#### ` wins; otherwise the last number in
/// the text. Thousands separators are removed.
pub fn extract_final_number(output: &str) -> Result<String, EvalError> {
    if let Some(pos) = output.rfind(ANSWER_MARKER) {
        if let Some(m) = NUMBER.find(&output[pos + ANSWER_MARKER.len()..]) {
            return Ok(clean_number(m.as_str()));
        }
    }
    NUMBER
        .find_iter(output)
        .last()
        .map(|m| clean_number(m.as_str()))
        .ok_or(EvalError::NoNumber)
}

/// Canonical decimal form: no sign on zero, no leading or trailing zeros, no separators.
pub fn normalize_number(text: &str) -> Option<String> {
    let text = text.trim().replace(',', "");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(&text)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let mut out = String::new();
    if negative && !(int.is_empty() && frac.is_empty()) {
        out.push('-');
    }
    out.push_str(if int.is_empty() { "0" } else { int });
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    Some(out)
}

/// Numeric equality when both sides are numbers, exact trimmed equality otherwise.
pub fn numeric_eq(a: &str, b: &str) -> bool {
    match (normalize_number(a), normalize_number(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a.trim() == b.trim(),
    }
}

/// Fraction of positions where prediction and gold are numerically equal.
pub fn exact_match_accuracy<P: AsRef<str>, G: AsRef<str>>(
    predictions: &[P],
    golds: &[G],
) -> Result<Rational, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    if golds.is_empty() {
        return Ok(Rational::ZERO);
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| numeric_eq(p.as_ref(), g.as_ref()))
        .count();
    Ok(Rational::new(hits as u64, golds.len() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaTokenizer {
    /// Whitespace-separated words.
    #[default]
    Whitespace,
    /// Every non-space character, for scripts written without spaces.
    Char,
}

impl QaTokenizer {
    pub fn for_language(code: &str) -> Self {
        match code {
            "zh" | "th" | "ja" => QaTokenizer::Char,
            _ => QaTokenizer::Whitespace,
        }
    }
}

impl FromStr for QaTokenizer {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(QaTokenizer::Whitespace),
            "char" => Ok(QaTokenizer::Char),
            other => Err(EvalError::UnknownTokenizer(other.to_string())),
        }
    }
}

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}\p{S}]").unwrap());

/// Lowercased, punctuation removed, whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    PUNCT
        .replace_all(&lower, " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn answer_tokens(normalized: &str, tokenizer: QaTokenizer) -> Vec<String> {
    match tokenizer {
        QaTokenizer::Whitespace => normalized.split_whitespace().map(str::to_string).collect(),
        QaTokenizer::Char => normalized
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaScore {
    pub exact_match: bool,
    pub f1: Rational,
}

/// Exact match and token F1 between a predicted and a gold answer span.
pub fn qa_em_f1(pred: &str, gold: &str, tokenizer: QaTokenizer) -> QaScore {
    let (pred, gold) = (normalize_answer(pred), normalize_answer(gold));
    let exact_match = pred == gold;
    let (p, g) = (answer_tokens(&pred, tokenizer), answer_tokens(&gold, tokenizer));
    let f1 = if p.is_empty() || g.is_empty() {
        if exact_match {
            Rational::ONE
        } else {
            Rational::ZERO
        }
    } else {
        let mut gold_counts: HashMap<&str, usize> = HashMap::new();
        for t in &g {
            *gold_counts.entry(t).or_default() += 1;
        }
        let mut common = 0u64;
        for t in &p {
            if let Some(c) = gold_counts.get_mut(t.as_str()).filter(|c| **c > 0) {
                *c -= 1;
                common += 1;
            }
        }
        Rational::new(2 * common, (p.len() + g.len()) as u64)
    };
    QaScore { exact_match, f1 }
}

const LABEL_KEYWORDS: &[(&str, NliLabel)] = &[
    ("entailment", NliLabel::Entailment),
    ("neutral", NliLabel::Neutral),
    ("contradiction", NliLabel::Contradiction),
    // The training prompt spells the option this way, so models may echo it.
    ("contradition", NliLabel::Contradiction),
];

/// The label whose keyword occurs first, case-insensitively.
pub fn nli_label_parse(output: &str) -> Result<NliLabel, EvalError> {
    let lower = output.to_lowercase();
    LABEL_KEYWORDS
        .iter()
        .filter_map(|(kw, label)| lower.find(kw).map(|pos| (pos, *label)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, label)| label)
        .ok_or(EvalError::NoLabel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_number() {
        let out =
            "Natalia sold 48/2 = 24 clips in May.\nNatalia sold 48+24 = 72 clips altogether in April and May.\n#### 72";
        assert_eq!(extract_final_number(out).unwrap(), "72");
        assert_eq!(extract_final_number("The answer is 1,234.5").unwrap(), "1234.5");
        assert_eq!(extract_final_number("no numbers here"), Err(EvalError::NoNumber));
        assert_eq!(extract_final_number("#### 5 then 7").unwrap(), "5");
        assert_eq!(extract_final_number("gained +12.").unwrap(), "12");
    }

    #[test]
    fn numeric_comparison() {
        assert!(numeric_eq("72", "72.0"));
        assert!(numeric_eq("1,000", "1000"));
        assert!(numeric_eq("-0", "0.00"));
        assert!(!numeric_eq("72", "27"));
        assert!(numeric_eq("abc", " abc "));
        assert_eq!(exact_match_accuracy(&["72"], &["72.0"]).unwrap(), Rational::ONE);
        assert_eq!(exact_match_accuracy(&["1", "2"], &["3", "4"]).unwrap(), Rational::ZERO);
        assert!(exact_match_accuracy(&["1"], &["1", "2"]).is_err());
    }

    #[test]
    fn qa_scores() {
        let same = qa_em_f1(
            "Saint Bernadette Soubirous",
            "Saint Bernadette Soubirous",
            QaTokenizer::Whitespace,
        );
        assert_eq!((same.exact_match, same.f1), (true, Rational::ONE));
        let none = qa_em_f1("Paris", "London", QaTokenizer::Whitespace);
        assert_eq!((none.exact_match, none.f1), (false, Rational::ZERO));
        let part = qa_em_f1(
            "Saint Bernadette",
            "Saint Bernadette Soubirous",
            QaTokenizer::Whitespace,
        );
        assert_eq!(part.f1, Rational::new(4, 5));
        assert!(qa_em_f1("the Cat.", "the cat", QaTokenizer::Whitespace).exact_match);
        assert_eq!(qa_em_f1("北京市", "北京", QaTokenizer::Char).f1, Rational::new(4, 5));
    }

    #[test]
    fn nli_labels() {
        assert_eq!(nli_label_parse("Neutral").unwrap(), NliLabel::Neutral);
        assert_eq!(
            nli_label_parse("  entailment because...").unwrap(),
            NliLabel::Entailment
        );
        assert_eq!(nli_label_parse("Contradition.").unwrap(), NliLabel::Contradiction);
        assert_eq!(
            nli_label_parse("neutral, not contradiction").unwrap(),
            NliLabel::Neutral
        );
        assert_eq!(nli_label_parse("maybe"), Err(EvalError::NoLabel));
    }
}
