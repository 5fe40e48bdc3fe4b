//! Mark-then-translate answer span projection.

use crate::corpus::char_to_byte;

pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpanError {
    #[error("span {start}+{len} exceeds context of {context_len} characters")]
    OutOfBounds {
        start: usize,
        len: usize,
        context_len: usize,
    },
    #[error("context already contains an answer tag")]
    AlreadyMarked,
    #[error("answer tag missing from translation")]
    MissingTag,
    #[error("answer tag repeated in translation")]
    DuplicateTag,
    #[error("closing answer tag precedes the opening tag")]
    CrossedTag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanMarking {
    pub marked_text: String,
    /// Character offset of the span in the unmarked context.
    pub answer_start: usize,
    /// Span length in characters.
    pub answer_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSpan {
    pub clean_text: String,
    pub span_text: String,
    /// Character offset of `span_text` in `clean_text`.
    pub start: usize,
}

/// Wraps `context[answer_start .. answer_start + answer_len]` (characters) in answer tags.
pub fn mark_answer_span(context: &str, answer_start: usize, answer_len: usize) -> Result<SpanMarking, SpanError> {
    if context.contains(ANSWER_OPEN) || context.contains(ANSWER_CLOSE) {
        return Err(SpanError::AlreadyMarked);
    }
    let out_of_bounds = || SpanError::OutOfBounds {
        start: answer_start,
        len: answer_len,
        context_len: context.chars().count(),
    };
    let open = char_to_byte(context, answer_start).ok_or_else(out_of_bounds)?;
    let close = answer_start
        .checked_add(answer_len)
        .and_then(|end| char_to_byte(context, end))
        .ok_or_else(out_of_bounds)?;
    let mut marked_text = String::with_capacity(context.len() + ANSWER_OPEN.len() + ANSWER_CLOSE.len());
    marked_text.push_str(&context[..open]);
    marked_text.push_str(ANSWER_OPEN);
    marked_text.push_str(&context[open..close]);
    marked_text.push_str(ANSWER_CLOSE);
    marked_text.push_str(&context[close..]);
    Ok(SpanMarking {
        marked_text,
        answer_start,
        answer_len,
    })
}

/// Removes the answer tags from a translated text and locates the span between them.
pub fn extract_marked_span(translated: &str) -> Result<ExtractedSpan, SpanError> {
    let opens = translated.matches(ANSWER_OPEN).count();
    let closes = translated.matches(ANSWER_CLOSE).count();
    if opens > 1 || closes > 1 {
        return Err(SpanError::DuplicateTag);
    }
    if opens == 0 || closes == 0 {
        return Err(SpanError::MissingTag);
    }
    let open = translated.find(ANSWER_OPEN).expect("counted");
    let close = translated.find(ANSWER_CLOSE).expect("counted");
    if close < open {
        return Err(SpanError::CrossedTag);
    }
    let before = &translated[..open];
    let span_text = &translated[open + ANSWER_OPEN.len()..close];
    let after = &translated[close + ANSWER_CLOSE.len()..];
    Ok(ExtractedSpan {
        clean_text: format!("{before}{span_text}{after}"),
        span_text: span_text.to_string(),
        start: before.chars().count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marks_inside_and_at_extremes() {
        assert_eq!(
            mark_answer_span("abcdef", 2, 2).unwrap().marked_text,
            "ab<answer>cd</answer>ef"
        );
        assert_eq!(
            mark_answer_span("abcdef", 0, 6).unwrap().marked_text,
            "<answer>abcdef</answer>"
        );
        assert_eq!(
            mark_answer_span("日本語", 1, 1).unwrap().marked_text,
            "日<answer>本</answer>語"
        );
    }

    #[test]
    fn marking_errors() {
        assert_eq!(mark_answer_span("x <answer> y", 0, 1), Err(SpanError::AlreadyMarked));
        assert!(matches!(
            mark_answer_span("abc", 2, 2),
            Err(SpanError::OutOfBounds { .. })
        ));
        assert!(matches!(
            mark_answer_span("abc", 4, 0),
            Err(SpanError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn extracts_span() {
        let got = extract_marked_span("xy<answer>Z</answer>w").unwrap();
        assert_eq!(
            (got.clean_text.as_str(), got.span_text.as_str(), got.start),
            ("xyZw", "Z", 2)
        );
    }

    #[test]
    fn distinct_extraction_failures() {
        assert_eq!(extract_marked_span("a <answer>b"), Err(SpanError::MissingTag));
        assert_eq!(extract_marked_span("plain"), Err(SpanError::MissingTag));
        assert_eq!(
            extract_marked_span("<answer>a</answer><answer>"),
            Err(SpanError::DuplicateTag)
        );
        assert_eq!(extract_marked_span("a</answer>b<answer>c"), Err(SpanError::CrossedTag));
    }
}
