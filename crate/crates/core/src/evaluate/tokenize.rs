//! BLEU tokenizers compatible with the reference scorer's `13a`, `zh` and `char`.

use std::sync::LazyLock;

use regex::Regex;

/// Whitespace as the reference scorer's `str.split()` sees it.
///
/// Unicode White_Space plus the ASCII information separators U+001C..U+001F.
pub(crate) fn is_split_space(c: char) -> bool {
    c.is_whitespace() || ('\u{1c}'..='\u{1f}').contains(&c)
}

pub(crate) fn split_tokens(text: &str) -> Vec<String> {
    text.split(is_split_space)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

static POST_RULES: LazyLock<[(Regex, &'static str); 4]> = LazyLock::new(|| {
    [
        (Regex::new(r"([\{-\~\[-\x60 -\&\(-\+:-@/])").unwrap(), " $1 "),
        (Regex::new(r"([^0-9])([\.,])").unwrap(), "$1 $2 "),
        (Regex::new(r"([\.,])([^0-9])").unwrap(), " $1 $2"),
        (Regex::new(r"([0-9])(-)").unwrap(), "$1 $2 "),
    ]
});

fn post_tokenize(line: &str) -> Vec<String> {
    let mut line = line.to_string();
    for (re, replacement) in POST_RULES.iter() {
        line = re.replace_all(&line, *replacement).into_owned();
    }
    split_tokens(&line)
}

pub fn tokenize_13a(text: &str) -> Vec<String> {
    let mut line = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    post_tokenize(&format!(" {line} "))
}

/// Codepoint ranges split into single tokens by the `zh` tokenizer.
///
/// The reference scorer writes the two supplementary-plane ranges as
/// five-digit `\u` escapes, which parse as a BMP character plus a digit; the
/// effective ranges it applies are the ones below, reproduced exactly.
const ZH_RANGES: &[(char, char)] = &[
    ('\u{3400}', '\u{4db5}'),
    ('\u{4e00}', '\u{9fa5}'),
    ('\u{9fa6}', '\u{9fbb}'),
    ('\u{f900}', '\u{fa2d}'),
    ('\u{fa30}', '\u{fa6a}'),
    ('\u{fa70}', '\u{fad9}'),
    ('\u{2001}', '\u{2a6d}'),
    ('\u{2f81}', '\u{2fa1}'),
    ('\u{ff00}', '\u{ffef}'),
    ('\u{2e80}', '\u{2eff}'),
    ('\u{3000}', '\u{303f}'),
    ('\u{31c0}', '\u{31ef}'),
    ('\u{2f00}', '\u{2fdf}'),
    ('\u{2ff0}', '\u{2fff}'),
    ('\u{3100}', '\u{312f}'),
    ('\u{31a0}', '\u{31bf}'),
    ('\u{fe10}', '\u{fe1f}'),
    ('\u{fe30}', '\u{fe4f}'),
    ('\u{2600}', '\u{26ff}'),
    ('\u{2700}', '\u{27bf}'),
    ('\u{3200}', '\u{32ff}'),
    ('\u{3300}', '\u{33ff}'),
];

pub fn is_zh_split_char(c: char) -> bool {
    ZH_RANGES.iter().any(|&(lo, hi)| lo <= c && c <= hi)
}

pub fn tokenize_zh(text: &str) -> Vec<String> {
    let mut line = String::with_capacity(text.len() * 2);
    for c in text.trim_matches(is_split_space).chars() {
        if is_zh_split_char(c) {
            line.push(' ');
            line.push(c);
            line.push(' ');
        } else {
            line.push(c);
        }
    }
    post_tokenize(&line)
}

pub fn tokenize_char(text: &str) -> Vec<String> {
    text.chars().filter(|&c| !is_split_space(c)).map(String::from).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn thirteen_a() {
        assert_eq!(tokenize_13a("Hello, world!"), toks(&["Hello", ",", "world", "!"]));
        assert!(tokenize_13a("").is_empty());
        assert_eq!(tokenize_13a("3.5 km"), toks(&["3.5", "km"]));
        assert_eq!(tokenize_13a("a-\nb &amp; 1-2"), toks(&["ab", "&", "1", "-", "2"]));
    }

    #[test]
    fn zh() {
        assert_eq!(tokenize_zh("你好world"), toks(&["你", "好", "world"]));
        assert_eq!(tokenize_zh("Hello, world!"), tokenize_13a("Hello, world!"));
        assert!(tokenize_zh("").is_empty());
    }

    #[test]
    fn chars() {
        assert_eq!(tokenize_char("กข ค"), toks(&["ก", "ข", "ค"]));
        assert!(tokenize_char("").is_empty());
        assert_eq!(tokenize_char("ab"), toks(&["a", "b"]));
    }
}
