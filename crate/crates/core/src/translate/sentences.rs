//! Rule-based sentence splitting.
//!
//! A sentence ends at `.`, `!` or `?` followed by whitespace or the end of the
//! text, or at `。`, `！` or `？` anywhere. Trailing closing quotes and brackets
//! stay with the sentence they close. A period ending a known abbreviation does
//! not end a sentence.

use std::ops::Range;

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "e.g", "i.e", "cf", "inc", "ltd", "co",
    "corp", "fig", "approx", "dept", "est", "gen", "gov", "lt", "col", "sgt", "capt", "rev", "hon", "jan", "feb",
    "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "u.k", "a.m", "p.m", "ph.d",
];

fn is_ascii_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_wide_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '”' | '’' | '»' | '」' | '』' | '）')
}

/// Character ranges of each sentence, trimmed of surrounding whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if !(is_ascii_terminal(c) || is_wide_terminal(c)) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && (is_ascii_terminal(chars[end]) || is_wide_terminal(chars[end])) {
            end += 1;
        }
        while end < chars.len() && is_closer(chars[end]) {
            end += 1;
        }
        let wide = chars[i..end].iter().any(|&c| is_wide_terminal(c));
        let boundary = if wide {
            true
        } else {
            let followed_by_break = end == chars.len() || chars[end].is_whitespace();
            followed_by_break && !(c == '.' && end == i + 1 && ends_with_abbreviation(&chars[seg_start..i]))
        };
        if boundary {
            push_trimmed(&chars, seg_start, end, &mut spans);
            seg_start = end;
        }
        i = end;
    }
    push_trimmed(&chars, seg_start, chars.len(), &mut spans);
    spans
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, spans: &mut Vec<Range<usize>>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        spans.push(start..end);
    }
}

fn ends_with_abbreviation(before: &[char]) -> bool {
    let word_start = before
        .iter()
        .rposition(|c| c.is_whitespace() || matches!(c, '(' | '"' | '“'))
        .map_or(0, |p| p + 1);
    let word: String = before[word_start..].iter().collect::<String>().to_lowercase();
    !word.is_empty() && ABBREVIATIONS.contains(&word.as_str())
}

/// Splits text into sentences with internal whitespace runs collapsed to one space.
///
/// Joining the result with single spaces gives the whitespace-normalized text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    sentence_spans(text)
        .into_iter()
        .map(|r| {
            let segment: String = chars[r].iter().collect();
            segment.split_whitespace().collect::<Vec<_>>().join(" ")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_rule() {
        assert_eq!(split_sentences("A. B? C!"), vec!["A.", "B?", "C!"]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(
            split_sentences("Dr. Smith left. He ran."),
            vec!["Dr. Smith left.", "He ran."]
        );
        assert_eq!(
            split_sentences("Bring fruit, e.g. apples. Then go."),
            vec!["Bring fruit, e.g. apples.", "Then go."]
        );
    }

    #[test]
    fn no_terminal_punctuation() {
        assert_eq!(split_sentences("just words here"), vec!["just words here"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn decimals_and_closers() {
        assert_eq!(
            split_sentences("It costs 3.5 dollars. Ok."),
            vec!["It costs 3.5 dollars.", "Ok."]
        );
        assert_eq!(
            split_sentences("He said \"go.\" Then left?!"),
            vec!["He said \"go.\"", "Then left?!"]
        );
    }

    #[test]
    fn wide_terminals_split_without_spaces() {
        assert_eq!(
            split_sentences("你好。我很好！好吗？"),
            vec!["你好。", "我很好！", "好吗？"]
        );
    }

    #[test]
    fn spans_index_original_text() {
        let text = "  One.   Two  words.\nThree";
        let chars: Vec<char> = text.chars().collect();
        let got: Vec<String> = sentence_spans(text)
            .into_iter()
            .map(|r| chars[r].iter().collect())
            .collect();
        assert_eq!(got, vec!["One.", "Two  words.", "Three"]);
    }
}
