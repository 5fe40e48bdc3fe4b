use std::path::{Path, PathBuf};

use serde_json::Value;

use stt_core::corpus::{
    Dataset, DatasetRole, LanguageTag, MathSample, NliLabel, NliSample, ParallelPair, Sample, TaskKind,
};
use stt_core::filter::{filter_candidates, FilterConfig};
use stt_core::gateway::{Gateway, MockBackend};
use stt_core::prompting::{render_code_switch_instruction, sample_few_shots, FewShotBank, InstructionTable};
use stt_core::synthesize::{assemble_training_mix, build_code_switch, build_target_dataset, render_input, Origin};
use stt_core::translate::{translate_dataset, translate_test_inputs, BankSet, FieldBudgets, TranslateError};

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn echo(cap: usize) -> Gateway {
    Gateway::new(Box::new(MockBackend::echo()), cap).unwrap()
}

fn en() -> LanguageTag {
    LanguageTag::english()
}

fn de() -> LanguageTag {
    LanguageTag::builtin("de").unwrap()
}

fn math(id: &str, a: u32, b: u32) -> Sample {
    Sample::Math(
        MathSample::new(
            id,
            format!("Lena has {a} shells and finds {b} more. How many shells does she have?"),
            format!("She has {a} + {b} = {} shells.\n#### {}", a + b, a + b),
        )
        .unwrap(),
    )
}

fn math_banks(src: &LanguageTag, tgt: &LanguageTag) -> BankSet {
    let pairs: Vec<ParallelPair> = (0..8)
        .map(|i| {
            let id = format!("p{i}");
            ParallelPair::new(math(&id, i, 2), math(&id, i, 2), src.code(), tgt.code()).unwrap()
        })
        .collect();
    BankSet::new(["question", "answer"].map(|f| sample_few_shots(&pairs, f, 8, 1).unwrap()))
}

fn math_source(n: u32) -> Dataset {
    let samples = (0..n).map(|i| math(&format!("m{i:02}"), 3 + i, 1 + i % 5)).collect();
    Dataset::new(TaskKind::Math, en(), DatasetRole::Source, samples).unwrap()
}

#[test]
fn task_templates_match_goldens() {
    let examples = std::fs::read_to_string(core_dir().join("tests/fixtures/task_examples.jsonl")).unwrap();
    let mut seen = Vec::new();
    for line in examples.lines() {
        let record: Value = serde_json::from_str(line).unwrap();
        let task: TaskKind = record["task"].as_str().unwrap().parse().unwrap();
        let sample = Sample::from_record(task, &record, "x").unwrap();
        let golden = std::fs::read_to_string(core_dir().join(format!("assets/golden/task_{task}.txt"))).unwrap();
        assert_eq!(render_input(&sample.input_projection()), golden, "{task}");
        seen.push(task);
    }
    assert_eq!(seen, [TaskKind::Math, TaskKind::ExtractiveQa, TaskKind::Nli]);
}

#[test]
fn math_run_is_deterministic_across_caps() {
    let data = math_source(20);
    let banks = math_banks(&en(), &de());
    let run = |cap| {
        let (candidates, manifest) = translate_dataset(
            &data,
            &de(),
            &banks,
            &FieldBudgets::defaults(TaskKind::Math),
            &echo(cap),
        )
        .unwrap();
        let result = filter_candidates(&candidates, &FilterConfig::default());
        let records: Vec<Value> = candidates.iter().map(|c| c.to_record()).collect();
        (
            serde_json::to_string(&records).unwrap(),
            serde_json::to_string(&manifest).unwrap(),
            result.stats,
        )
    };
    let (c1, m1, s1) = run(1);
    let (c8, m8, s8) = run(8);
    assert_eq!((&c1, &m1), (&c8, &m8));
    assert_eq!(s1, s8);
    assert_eq!((s1.total, s1.kept), (20, 20));
    assert_eq!(run(3).0, c1);
}

#[test]
fn empty_dataset_flows_through_every_stage() {
    let data = Dataset::empty(TaskKind::Math, en(), DatasetRole::Source);
    let banks = math_banks(&en(), &de());
    let gateway = echo(4);
    let (candidates, manifest) =
        translate_dataset(&data, &de(), &banks, &FieldBudgets::defaults(TaskKind::Math), &gateway).unwrap();
    assert!(candidates.is_empty());
    assert_eq!((manifest.counts.samples, manifest.counts.calls), (0, 0));
    assert_eq!(gateway.stats().requests, 0);

    let result = filter_candidates(&candidates, &FilterConfig::default());
    assert_eq!((result.stats.total, result.stats.kept), (0, 0));
    assert!(result.stats.removal_rate.is_zero());

    let d_tgt = build_target_dataset(&result.kept, TaskKind::Math, &en(), &de()).unwrap();
    let d_cs = build_code_switch(&result.kept, TaskKind::Math, &en(), &de(), &InstructionTable::new()).unwrap();
    assert!(d_tgt.is_empty() && d_cs.is_empty());
    let seeds = vec![math("s1", 1, 1)];
    let mix = assemble_training_mix(&data, Some(&d_tgt), Some(&d_cs), &seeds, &de(), 0).unwrap();
    assert_eq!(mix.len(), 1);
    assert_eq!(mix.examples[0].origin, Origin::FewshotSeed);
}

#[test]
fn translate_test_moves_inputs_and_keeps_labels() {
    let premise = |i: usize| format!("Der Hund {i} läuft.");
    let samples: Vec<Sample> = (0..5)
        .map(|i| {
            Sample::Nli(NliSample::new(
                format!("n{i}"),
                premise(i),
                "Ein Tier ist draußen.",
                NliLabel::ALL[i % 3],
            ))
        })
        .collect();
    let data = Dataset::new(TaskKind::Nli, de(), DatasetRole::Source, samples.clone()).unwrap();
    let bank = |field: &str| {
        FewShotBank::new(
            TaskKind::Nli,
            field,
            vec![("Die Katze schläft.".into(), "The cat sleeps.".into())],
            de(),
            en(),
        )
        .unwrap()
    };
    let banks = BankSet::new([bank("premise"), bank("hypothesis")]);
    let gateway = echo(2);
    let (moved, outcomes) =
        translate_test_inputs(&data, &en(), &banks, &FieldBudgets::defaults(TaskKind::Nli), &gateway).unwrap();
    assert_eq!(moved.language().code(), "en");
    assert_eq!(moved.len(), 5);
    assert_eq!(outcomes.len(), 10);
    assert!(moved.provenance().iter().any(|p| p.contains("translate-test")));
    for (orig, new) in samples.iter().zip(moved.samples()) {
        assert_eq!(orig.id(), new.id());
        assert_eq!(orig.output_projection(), new.output_projection());
    }
    // Echo returns the source text, so inputs survive verbatim.
    assert_eq!(moved.samples()[2].field("premise"), Some(premise(2).as_str()));

    let qa = Dataset::empty(TaskKind::ExtractiveQa, de(), DatasetRole::Source);
    let err = translate_test_inputs(
        &qa,
        &en(),
        &banks,
        &FieldBudgets::defaults(TaskKind::ExtractiveQa),
        &gateway,
    )
    .unwrap_err();
    assert!(matches!(err, TranslateError::UnsupportedTask(TaskKind::ExtractiveQa)));
}

#[test]
fn code_switch_instruction_is_in_the_output_language() {
    let mut table = InstructionTable::new();
    table.insert("de".into(), "Bitte antworte auf Deutsch.".into());
    let shown = render_code_switch_instruction(&de(), &table);
    assert_eq!(shown.text, "Bitte antworte auf Deutsch.");
    assert!(!shown.fallback);
    let th = LanguageTag::builtin("th").unwrap();
    let fallback = render_code_switch_instruction(&th, &table);
    assert_eq!(fallback.text, "Please answer in Thai.");
    assert!(fallback.fallback);
}
