//! Equivalence with fixtures produced by independent reference implementations
//! (see `fixtures/gen_oracles.py`).

use std::path::PathBuf;

use serde::Deserialize;
use stt_core::evaluate::{
    corpus_bleu, extract_final_number, tokenize_13a, tokenize_zh, welch_t_test, BleuTokenizer, Smoothing,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn lines(name: &str) -> Vec<String> {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let mut lines: Vec<String> = text.split('\n').map(str::to_string).collect();
    lines.pop();
    lines
}

fn load<T: for<'de> Deserialize<'de>>(name: &str) -> T {
    serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

#[derive(Deserialize)]
struct BleuCase {
    corpus: String,
    tokenizer: String,
    smoothing: String,
    score: f64,
    precisions: [f64; 4],
    bp: f64,
    sys_len: usize,
    ref_len: usize,
}

#[test]
fn bleu_matches_reference_scorer() {
    let cases: Vec<BleuCase> = load("bleu/expected.json");
    assert_eq!(cases.len(), 20);
    for case in cases {
        let hyp = lines(&format!("bleu/{}.hyp", case.corpus));
        let reference = lines(&format!("bleu/{}.ref", case.corpus));
        let tokenizer: BleuTokenizer = case.tokenizer.parse().unwrap();
        let smoothing: Smoothing = case.smoothing.parse().unwrap();
        let got = corpus_bleu(&hyp, &reference, tokenizer, smoothing).unwrap();
        let label = format!("{} {} {}", case.corpus, case.tokenizer, case.smoothing);
        assert_eq!(
            (got.hyp_length, got.ref_length),
            (case.sys_len, case.ref_len),
            "{label}"
        );
        assert!(
            (got.score - case.score).abs() < 1e-9,
            "{label}: {} vs {}",
            got.score,
            case.score
        );
        assert!((got.brevity_penalty - case.bp).abs() < 1e-12, "{label}");
        for (g, e) in got.precisions.iter().zip(case.precisions) {
            assert!(
                (g - e).abs() < 1e-9,
                "{label}: precisions {:?} vs {:?}",
                got.precisions,
                case.precisions
            );
        }
    }
}

#[derive(Deserialize)]
struct TokenizerCase {
    text: String,
    #[serde(rename = "13a")]
    thirteen: Vec<String>,
    zh: Vec<String>,
}

#[test]
fn tokenizers_match_reference_scorer() {
    let cases: Vec<TokenizerCase> = load("bleu/tokenizers.json");
    for case in cases {
        assert_eq!(tokenize_13a(&case.text), case.thirteen, "13a on {:?}", case.text);
        assert_eq!(tokenize_zh(&case.text), case.zh, "zh on {:?}", case.text);
    }
}

#[derive(Deserialize)]
struct WelchCase {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    p: f64,
    dof: f64,
}

#[test]
fn welch_matches_reference_statistics() {
    let cases: Vec<WelchCase> = load("welch.json");
    assert_eq!(cases.len(), 5);
    for case in cases {
        let got = welch_t_test(&case.a, &case.b).unwrap();
        assert!(
            (got.t_statistic - case.t).abs() <= 1e-6,
            "t {} vs {}",
            got.t_statistic,
            case.t
        );
        assert!((got.p_value - case.p).abs() <= 1e-8, "p {} vs {}", got.p_value, case.p);
        assert!((got.degrees_of_freedom - case.dof).abs() <= 1e-9);
    }
}

#[derive(Deserialize)]
struct NumberCase {
    text: String,
    expected: Option<String>,
}

#[test]
fn number_extraction_matches_regex_oracle() {
    let cases: Vec<NumberCase> = load("numbers.json");
    assert_eq!(cases.len(), 30);
    for case in cases {
        assert_eq!(extract_final_number(&case.text).ok(), case.expected, "{:?}", case.text);
    }
}

#[test]
fn student_t_tail_matches_statrs() {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use stt_core::evaluate::welch::{ln_gamma, student_t_two_sided};
    for dof in [1.0, 2.5, 4.0, 7.3, 30.0, 250.0] {
        let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
        for t in [0.05, 0.5, 1.0, 2.0, 3.7, 8.0, 25.0] {
            let want = 2.0 * reference.sf(t);
            let got = student_t_two_sided(t, dof);
            assert!(
                (got - want).abs() <= 1e-10 * want.max(1e-3),
                "t={t} dof={dof}: {got} vs {want}"
            );
        }
    }
    for x in [0.1, 0.5, 1.0, 3.3, 10.0, 140.5] {
        assert!(
            (ln_gamma(x) - statrs::function::gamma::ln_gamma(x)).abs() < 1e-10,
            "x={x}"
        );
    }
}
