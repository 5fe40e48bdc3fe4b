//! Length-ratio and completeness filtering of translation candidates.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageTag, ParallelPair};
use crate::rational::Rational;
use crate::translate::{Candidate, FieldDefect, FieldTranslation, TranslationOutcome};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("ratio bounds must satisfy 0 < min < max, got {min} and {max}")]
    BadBounds { min: Rational, max: Rational },
    #[error("source text has zero weighted length; the ratio is undefined")]
    EmptySource,
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_min_ratio")]
    pub min_ratio: Rational,
    #[serde(default = "default_max_ratio")]
    pub max_ratio: Rational,
    /// Per-language character weights; falls back to the language tag's own weight.
    #[serde(default = "default_weights")]
    pub weight_map: BTreeMap<String, Rational>,
    #[serde(default = "default_inclusive")]
    pub boundary_inclusive: bool,
}

fn default_min_ratio() -> Rational {
    Rational::new(1, 3)
}

fn default_max_ratio() -> Rational {
    Rational::from_integer(3)
}

fn default_inclusive() -> bool {
    true
}

fn default_weights() -> BTreeMap<String, Rational> {
    ["en", "de", "ru", "th", "zh"]
        .into_iter()
        .filter_map(LanguageTag::builtin)
        .map(|l| (l.code().to_string(), l.char_weight()))
        .collect()
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_ratio: default_min_ratio(),
            max_ratio: default_max_ratio(),
            weight_map: default_weights(),
            boundary_inclusive: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.min_ratio.is_zero() || self.min_ratio >= self.max_ratio {
            return Err(FilterError::BadBounds {
                min: self.min_ratio,
                max: self.max_ratio,
            });
        }
        Ok(())
    }

    /// The character weight for `lang`, and whether it came from the weight map.
    pub fn weight_for(&self, lang: &LanguageTag) -> (Rational, bool) {
        match self.weight_map.get(lang.code()) {
            Some(w) => (*w, true),
            None => (lang.char_weight(), false),
        }
    }

    fn within(&self, ratio: Rational) -> Option<RejectionReason> {
        let (low, high) = if self.boundary_inclusive {
            (ratio < self.min_ratio, ratio > self.max_ratio)
        } else {
            (ratio <= self.min_ratio, ratio >= self.max_ratio)
        };
        if low {
            Some(RejectionReason::RatioLow)
        } else if high {
            Some(RejectionReason::RatioHigh)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    RatioLow,
    RatioHigh,
    IncompleteGeneration,
    SpanMissingTag,
    SpanDuplicateTag,
    SpanCrossedTag,
    DelimiterCollision,
}

impl RejectionReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectionReason::RatioLow => "ratio_low",
            RejectionReason::RatioHigh => "ratio_high",
            RejectionReason::IncompleteGeneration => "incomplete_generation",
            RejectionReason::SpanMissingTag => "span_missing_tag",
            RejectionReason::SpanDuplicateTag => "span_duplicate_tag",
            RejectionReason::SpanCrossedTag => "span_crossed_tag",
            RejectionReason::DelimiterCollision => "delimiter_collision",
        }
    }
}

impl std::fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<FieldDefect> for RejectionReason {
    fn from(defect: FieldDefect) -> Self {
        match defect {
            FieldDefect::DelimiterCollision => RejectionReason::DelimiterCollision,
            FieldDefect::SpanMissingTag => RejectionReason::SpanMissingTag,
            FieldDefect::SpanDuplicateTag => RejectionReason::SpanDuplicateTag,
            FieldDefect::SpanCrossedTag => RejectionReason::SpanCrossedTag,
        }
    }
}

/// One failing field of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub sample_id: String,
    pub reason: RejectionReason,
    pub field_name: String,
    #[serde(default)]
    pub measured_ratio: Option<Rational>,
    /// True for the record that decides the sample's reason in the stats.
    pub primary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub total: usize,
    pub kept: usize,
    /// Samples, keyed by their primary reason.
    pub rejected_by_reason: BTreeMap<RejectionReason, usize>,
    pub removal_rate: Rational,
    pub fields_total: usize,
    pub fields_rejected_by_reason: BTreeMap<RejectionReason, usize>,
    pub field_removal_rate: Rational,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FilterStats {
    pub fn rejected(&self) -> usize {
        self.rejected_by_reason.values().sum()
    }

    pub fn fields_rejected(&self) -> usize {
        self.fields_rejected_by_reason.values().sum()
    }
}

fn rate(part: usize, whole: usize) -> Rational {
    if whole == 0 {
        Rational::ZERO
    } else {
        Rational::new(part as u64, whole as u64)
    }
}

/// Trimmed Unicode scalar count times the language's character weight.
pub fn weighted_length(text: &str, lang: &LanguageTag) -> Rational {
    weighted_with(text, lang.char_weight())
}

fn weighted_with(text: &str, weight: Rational) -> Rational {
    let chars = text.trim().chars().count() as u64;
    Rational::from_integer(chars)
        .checked_mul(weight)
        .expect("weighted length fits in u64")
}

fn ratio_of(src: Rational, tgt: Rational) -> Result<Rational, FilterError> {
    tgt.checked_div(src).ok_or(FilterError::EmptySource)
}

/// Weighted target length over weighted source length, checked against the bounds.
pub fn length_ratio_ok(
    src_text: &str,
    src_lang: &LanguageTag,
    tgt_text: &str,
    tgt_lang: &LanguageTag,
    cfg: &FilterConfig,
) -> Result<(bool, Rational), FilterError> {
    let src = weighted_with(src_text, cfg.weight_for(src_lang).0);
    let tgt = weighted_with(tgt_text, cfg.weight_for(tgt_lang).0);
    let ratio = ratio_of(src, tgt)?;
    Ok((cfg.within(ratio).is_none(), ratio))
}

pub fn completeness_ok(outcome: &TranslationOutcome) -> bool {
    outcome.terminated_by_stop
}

/// First failing check of one field: delimiter, completeness, span, then ratio.
fn check_field(
    field: &FieldTranslation,
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
    cfg: &FilterConfig,
) -> Option<(RejectionReason, Option<Rational>)> {
    if field.defect == Some(FieldDefect::DelimiterCollision) {
        return Some((RejectionReason::DelimiterCollision, None));
    }
    if !field.outcomes.iter().all(completeness_ok) {
        return Some((RejectionReason::IncompleteGeneration, None));
    }
    if let Some(defect) = field.defect {
        return Some((defect.into(), None));
    }
    let src = weighted_with(&field.source_text, cfg.weight_for(src_lang).0);
    let tgt = weighted_with(&field.translated_text, cfg.weight_for(tgt_lang).0);
    match ratio_of(src, tgt) {
        Ok(ratio) => cfg.within(ratio).map(|reason| (reason, Some(ratio))),
        // Empty source: only an empty translation is acceptable.
        Err(_) if tgt.is_zero() => None,
        Err(_) => Some((RejectionReason::RatioHigh, None)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterResult {
    pub kept: Vec<ParallelPair>,
    pub rejections: Vec<RejectionRecord>,
    pub stats: FilterStats,
}

/// Keeps a sample only if every translated field passes every check.
pub fn filter_candidates(candidates: &[Candidate], cfg: &FilterConfig) -> FilterResult {
    let mut result = FilterResult::default();
    let mut unweighted: BTreeSet<String> = BTreeSet::new();
    for candidate in candidates {
        for lang in [&candidate.src_lang, &candidate.tgt_lang] {
            if !cfg.weight_for(lang).1 && LanguageTag::builtin(lang.code()).is_none() {
                unweighted.insert(lang.code().to_string());
            }
        }
        let mut records = Vec::new();
        for field in &candidate.fields {
            result.stats.fields_total += 1;
            if let Some((reason, measured_ratio)) = check_field(field, &candidate.src_lang, &candidate.tgt_lang, cfg) {
                *result.stats.fields_rejected_by_reason.entry(reason).or_default() += 1;
                records.push(RejectionRecord {
                    sample_id: candidate.id().to_string(),
                    reason,
                    field_name: field.field_name.clone(),
                    measured_ratio,
                    primary: records.is_empty(),
                });
            }
        }
        let pair = if records.is_empty() { candidate.pair() } else { None };
        match pair {
            Some(pair) => result.kept.push(pair),
            None => {
                // A candidate without a target but with no failing field cannot occur:
                // missing targets always come from a span defect.
                let reason = records
                    .first()
                    .map(|r| r.reason)
                    .unwrap_or(RejectionReason::SpanMissingTag);
                *result.stats.rejected_by_reason.entry(reason).or_default() += 1;
            }
        }
        result.rejections.extend(records);
    }
    let stats = &mut result.stats;
    stats.total = candidates.len();
    stats.kept = result.kept.len();
    stats.removal_rate = rate(stats.total - stats.kept, stats.total);
    stats.field_removal_rate = rate(stats.fields_rejected(), stats.fields_total);
    stats.warnings = unweighted
        .into_iter()
        .map(|code| format!("no character weight for language {code:?}; using 1"))
        .collect();
    result
}

pub fn write_rejections(path: &Path, rejections: &[RejectionRecord]) -> Result<(), FilterError> {
    let io = |e: std::io::Error| FilterError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for record in rejections {
        serde_json::to_writer(&mut out, record).expect("record serializes");
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(code: &str) -> LanguageTag {
        LanguageTag::builtin(code).unwrap()
    }

    #[test]
    fn weighted_lengths() {
        assert_eq!(weighted_length("", &lang("de")), Rational::ZERO);
        assert_eq!(weighted_length("Guten Morgen", &lang("de")), Rational::from_integer(12));
        assert_eq!(weighted_length("早上好朋友", &lang("zh")), Rational::from_integer(15));
        assert_eq!(weighted_length("  ab c \n", &lang("de")), Rational::from_integer(4));
    }

    #[test]
    fn ratio_examples() {
        let cfg = FilterConfig::default();
        let (ok, r) = length_ratio_ok("Good morning", &lang("en"), "早上好朋友", &lang("zh"), &cfg).unwrap();
        assert!(ok);
        assert_eq!(r, Rational::new(5, 4));
        let (ok, r) = length_ratio_ok("abcdefghi", &lang("en"), "abc", &lang("de"), &cfg).unwrap();
        assert!(ok);
        assert_eq!(r, Rational::new(1, 3));
        let (ok, r) = length_ratio_ok("abcdefghij", &lang("en"), &"x".repeat(31), &lang("de"), &cfg).unwrap();
        assert!(!ok);
        assert_eq!(r, Rational::new(31, 10));
        assert_eq!(
            length_ratio_ok(" ", &lang("en"), "x", &lang("de"), &cfg),
            Err(FilterError::EmptySource)
        );
    }

    #[test]
    fn exclusive_boundary() {
        let cfg = FilterConfig {
            boundary_inclusive: false,
            ..FilterConfig::default()
        };
        assert!(
            !length_ratio_ok("abcdefghi", &lang("en"), "abc", &lang("de"), &cfg)
                .unwrap()
                .0
        );
    }

    #[test]
    fn bounds_validation() {
        assert!(FilterConfig::default().validate().is_ok());
        let bad = FilterConfig {
            min_ratio: Rational::from_integer(3),
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_input_stats() {
        let r = filter_candidates(&[], &FilterConfig::default());
        assert_eq!(r.stats.total, 0);
        assert_eq!(r.stats.kept, 0);
        assert!(r.stats.rejected_by_reason.is_empty());
        assert_eq!(r.stats.removal_rate, Rational::ZERO);
    }

    #[test]
    fn config_parses_from_text() {
        let cfg: FilterConfig = serde_json::from_str(r#"{"min_ratio":"1/4","weight_map":{"ja":2}}"#).unwrap();
        assert_eq!(cfg.min_ratio, Rational::new(1, 4));
        assert_eq!(cfg.max_ratio, Rational::from_integer(3));
        assert_eq!(cfg.weight_map.get("ja"), Some(&Rational::from_integer(2)));
    }
}
