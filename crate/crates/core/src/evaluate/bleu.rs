//! Corpus BLEU with the reference scorer's statistics and smoothing.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tokenize::{is_split_space, tokenize_13a, tokenize_char, tokenize_zh};
use super::EvalError;

const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BleuTokenizer {
    #[serde(rename = "13a")]
    Thirteen,
    #[serde(rename = "zh")]
    Zh,
    #[serde(rename = "char")]
    Char,
}

impl BleuTokenizer {
    pub fn as_str(&self) -> &'static str {
        match self {
            BleuTokenizer::Thirteen => "13a",
            BleuTokenizer::Zh => "zh",
            BleuTokenizer::Char => "char",
        }
    }

    /// `zh` for Chinese, `char` for Thai, `13a` otherwise.
    pub fn for_language(code: &str) -> Self {
        match code {
            "zh" => BleuTokenizer::Zh,
            "th" => BleuTokenizer::Char,
            _ => BleuTokenizer::Thirteen,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            BleuTokenizer::Thirteen => tokenize_13a(text),
            BleuTokenizer::Zh => tokenize_zh(text),
            BleuTokenizer::Char => tokenize_char(text),
        }
    }
}

impl fmt::Display for BleuTokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BleuTokenizer {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "13a" => Ok(BleuTokenizer::Thirteen),
            "zh" => Ok(BleuTokenizer::Zh),
            "char" => Ok(BleuTokenizer::Char),
            other => Err(EvalError::UnknownTokenizer(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", content = "value", rename_all = "kebab-case")]
pub enum Smoothing {
    None,
    /// Halves the precision assigned to each successive zero-match order.
    #[default]
    Exp,
    Floor(f64),
    AddK(f64),
}

impl Smoothing {
    pub fn floor() -> Self {
        Smoothing::Floor(0.1)
    }

    pub fn add_k() -> Self {
        Smoothing::AddK(1.0)
    }
}

impl FromStr for Smoothing {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Smoothing::None),
            "exp" => Ok(Smoothing::Exp),
            "floor" => Ok(Smoothing::floor()),
            "add-k" => Ok(Smoothing::add_k()),
            other => Err(EvalError::UnknownSmoothing(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
    pub tokenizer: BleuTokenizer,
}

/// Summed n-gram statistics over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Stats {
    hyp_len: usize,
    ref_len: usize,
    correct: [u64; MAX_ORDER],
    total: [u64; MAX_ORDER],
}

fn ngram_counts(tokens: &[String]) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for n in 1..=MAX_ORDER {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    counts
}

fn add_segment(stats: &mut Stats, hyp: &[String], reference: &[String]) {
    stats.hyp_len += hyp.len();
    stats.ref_len += reference.len();
    let ref_counts = ngram_counts(reference);
    for (gram, count) in ngram_counts(hyp) {
        let n = gram.len() - 1;
        stats.total[n] += count;
        stats.correct[n] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
    }
}

fn score_from(stats: &Stats, smoothing: Smoothing, tokenizer: BleuTokenizer) -> BleuScore {
    let (sys, reference) = (stats.hyp_len as f64, stats.ref_len as f64);
    let brevity_penalty = if stats.hyp_len >= stats.ref_len {
        1.0
    } else if stats.hyp_len == 0 {
        0.0
    } else {
        (1.0 - reference / sys).exp()
    };
    let mut precisions = [0.0; MAX_ORDER];
    let mut result = BleuScore {
        score: 0.0,
        precisions,
        brevity_penalty,
        hyp_length: stats.hyp_len,
        ref_length: stats.ref_len,
        tokenizer,
    };
    if stats.correct.iter().all(|&c| c == 0) {
        return result;
    }
    let mut exp_factor = 1.0;
    for (n, precision) in precisions.iter_mut().enumerate() {
        let (mut correct, mut total) = (stats.correct[n] as f64, stats.total[n] as f64);
        if let (Smoothing::AddK(k), true) = (smoothing, n > 0) {
            correct += k;
            total += k;
        }
        if total == 0.0 {
            break;
        }
        *precision = if correct == 0.0 {
            match smoothing {
                Smoothing::Exp => {
                    exp_factor *= 2.0;
                    100.0 / (exp_factor * total)
                }
                Smoothing::Floor(v) => 100.0 * v / total,
                _ => 0.0,
            }
        } else {
            100.0 * correct / total
        };
    }
    result.precisions = precisions;
    // Averaging log(p / 100) instead of log(p) keeps a perfect corpus at exactly 100.
    result.score = if precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let mean = precisions.iter().map(|p| (p / 100.0).ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean.exp()
    };
    result
}

/// Corpus-level BLEU over aligned hypothesis/reference segments.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
    tokenizer: BleuTokenizer,
    smoothing: Smoothing,
) -> Result<BleuScore, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut stats = Stats::default();
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp = tokenizer.tokenize(hyp.as_ref().trim_end_matches(is_split_space));
        let reference = tokenizer.tokenize(reference.as_ref().trim_end_matches(is_split_space));
        add_segment(&mut stats, &hyp, &reference);
    }
    Ok(score_from(&stats, smoothing, tokenizer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_exactly_100() {
        let corpus = ["Der Hund bellt laut.", "Ein kleines Haus am See steht dort."];
        let s = corpus_bleu(&corpus, &corpus, BleuTokenizer::Thirteen, Smoothing::Exp).unwrap();
        assert_eq!(s.score, 100.0);
        assert_eq!(s.brevity_penalty, 1.0);
    }

    #[test]
    fn empty_hypotheses_score_zero() {
        let s = corpus_bleu(&["", ""], &["a b c d", "e f"], BleuTokenizer::Thirteen, Smoothing::Exp).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.hyp_length, 0);
    }

    #[test]
    fn shape_errors() {
        let none: [&str; 0] = [];
        assert_eq!(
            corpus_bleu(&none, &none, BleuTokenizer::Char, Smoothing::Exp),
            Err(EvalError::EmptyCorpus)
        );
        assert!(matches!(
            corpus_bleu(&["a"], &["a", "b"], BleuTokenizer::Char, Smoothing::Exp),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exp_smoothing_on_short_match() {
        // 3 unigrams, 2 bigrams matched; no trigram or 4-gram matches.
        let s = corpus_bleu(&["a b c"], &["a b x c"], BleuTokenizer::Thirteen, Smoothing::Exp).unwrap();
        assert_eq!(s.precisions[0], 100.0);
        assert_eq!(s.precisions[1], 50.0);
        assert_eq!(s.precisions[2], 100.0 / (2.0 * 1.0));
        assert_eq!(s.precisions[3], 0.0);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn parses_choices() {
        assert_eq!("13a".parse::<BleuTokenizer>().unwrap(), BleuTokenizer::Thirteen);
        assert_eq!("add-k".parse::<Smoothing>().unwrap(), Smoothing::AddK(1.0));
        assert!("flores101".parse::<BleuTokenizer>().is_err());
    }
}
