use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use stt_core::corpus::{
    read_dataset, read_parallel_pairs, take_subset, write_parallel_pairs, Dataset, NliLabel, ParallelPair, Sample,
    TaskKind,
};
use stt_core::evaluate::{
    corpus_bleu, exact_match_accuracy, extract_final_number, nli_label_parse, qa_em_f1, welch_t_test, BleuTokenizer,
    QaTokenizer, Smoothing,
};
use stt_core::filter::{filter_candidates, write_rejections, FilterConfig, FilterStats, RejectionReason};
use stt_core::gateway::Gateway;
use stt_core::prompting::{bank_from_pairs, sample_few_shot_pairs, FewShotBank};
use stt_core::synthesize::{
    assemble_training_mix, build_code_switch, build_target_dataset, export_training_records, write_examples,
};
use stt_core::translate::{translate_dataset, BankSet, TranslationManifest};

use crate::config::PipelineConfig;

pub const CANDIDATES: &str = "candidates.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const REJECTIONS: &str = "rejections.jsonl";
pub const KEPT_PAIRS: &str = "kept_pairs.jsonl";
pub const D_TGT: &str = "d_tgt.jsonl";
pub const D_CS: &str = "d_cs.jsonl";
pub const SYNTHESIS: &str = "synthesis.json";

/// Exit status 1: the inputs or configuration are wrong.
/// Exit status 2: the run itself failed.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn invalid(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure::Validation(e.into()))
    }

    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arm {
    Tgt,
    Cs,
}

impl Arm {
    fn as_str(self) -> &'static str {
        match self {
            Arm::Tgt => "tgt",
            Arm::Cs => "cs",
        }
    }
}

/// Parses `tgt`, `cs`, `tgt,cs` or the empty string (baseline only).
pub fn parse_arms(text: &str) -> Result<Vec<Arm>, String> {
    let mut arms = Vec::new();
    for part in text.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        let arm = match part {
            "tgt" => Arm::Tgt,
            "cs" => Arm::Cs,
            "none" | "src" => continue,
            other => return Err(format!("unknown arm {other:?}; expected tgt or cs")),
        };
        if !arms.contains(&arm) {
            arms.push(arm);
        }
    }
    arms.sort();
    Ok(arms)
}

/// File stem shared by a mix and its training-record export, e.g. `src+tgt+cs`.
pub fn mix_label(arms: &[Arm]) -> String {
    std::iter::once("src")
        .chain(arms.iter().map(|a| a.as_str()))
        .collect::<Vec<_>>()
        .join("+")
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()
}

fn source_dataset(cfg: &PipelineConfig) -> Outcome<Dataset> {
    let data = read_dataset(&cfg.input, cfg.task, cfg.src().invalid()?).invalid()?;
    Ok(match &cfg.subset {
        Some(s) => take_subset(&data, s.n, s.seed),
        None => data,
    })
}

fn sampled_pairs(cfg: &PipelineConfig) -> Outcome<Vec<ParallelPair>> {
    let Some(path) = &cfg.few_shot.parallel else {
        return Ok(Vec::new());
    };
    let pairs = read_parallel_pairs(path, cfg.task).invalid()?;
    if let Some(bad) = pairs
        .iter()
        .find(|p| p.src_lang() != cfg.src_lang || p.tgt_lang() != cfg.tgt_lang)
    {
        return Err(Failure::Validation(anyhow!(
            "{}: pair {} is {}->{}, expected {}->{}",
            path.display(),
            bad.id(),
            bad.src_lang(),
            bad.tgt_lang(),
            cfg.src_lang,
            cfg.tgt_lang
        )));
    }
    let seed = cfg.few_shot.seed.expect("validated");
    let picked = sample_few_shot_pairs(&pairs, cfg.few_shot.k, seed)
        .with_context(|| path.display().to_string())
        .invalid()?;
    Ok(picked.into_iter().cloned().collect())
}

fn bank_set(cfg: &PipelineConfig, picked: &[ParallelPair]) -> Outcome<BankSet> {
    let refs: Vec<&ParallelPair> = picked.iter().collect();
    let mut banks = Vec::new();
    for field in cfg.task.translatable_fields() {
        let bank = match cfg.few_shot.banks.get(*field) {
            Some(path) => FewShotBank::load(path)
                .with_context(|| path.display().to_string())
                .invalid()?,
            None => bank_from_pairs(&refs, field).invalid()?,
        };
        banks.push(bank);
    }
    let set = BankSet::new(banks);
    set.check_covers(cfg.task, cfg.task.translatable_fields(), &cfg.tgt().invalid()?)
        .invalid()?;
    Ok(set)
}

/// Target-language samples seeded into every training mix.
fn fewshot_seeds(cfg: &PipelineConfig) -> Outcome<Vec<Sample>> {
    if cfg.few_shot.parallel.is_some() {
        return Ok(sampled_pairs(cfg)?.iter().map(|p| p.tgt().clone()).collect());
    }
    match &cfg.few_shot.seed_samples {
        Some(path) => Ok(read_dataset(path, cfg.task, cfg.tgt().invalid()?)
            .invalid()?
            .samples()
            .to_vec()),
        None => {
            log::warn!("no few_shot.parallel or few_shot.seed_samples; mixes carry no target-language seeds");
            Ok(Vec::new())
        }
    }
}

fn prepare_output(cfg: &PipelineConfig) -> Outcome {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))
        .runtime()?;
    cfg.write_resolved().runtime()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub sample_id: String,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectionReason>,
}

/// Everything `stats` needs from a translate run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub samples: Vec<SampleVerdict>,
    pub filter: FilterStats,
    pub translation: TranslationManifest,
}

pub fn cmd_translate(cfg: &PipelineConfig) -> Outcome<RunManifest> {
    let data = source_dataset(cfg)?;
    let tgt = cfg.tgt().invalid()?;
    let banks = bank_set(cfg, &sampled_pairs(cfg)?)?;
    let gateway = Gateway::from_config(&cfg.backend).invalid()?;
    prepare_output(cfg)?;

    let (candidates, translation) = translate_dataset(&data, &tgt, &banks, &cfg.budgets(), &gateway).runtime()?;
    let result = filter_candidates(&candidates, &cfg.filter);

    let out = &cfg.output_dir;
    let records: Vec<Value> = candidates.iter().map(|c| c.to_record()).collect();
    stt_core::corpus::write_jsonl(&out.join(CANDIDATES), &records).runtime()?;
    write_rejections(&out.join(REJECTIONS), &result.rejections).runtime()?;
    write_parallel_pairs(&result.kept, &out.join(KEPT_PAIRS)).runtime()?;

    let samples = candidates
        .iter()
        .map(|c| {
            let reason = result
                .rejections
                .iter()
                .find(|r| r.primary && r.sample_id == c.id())
                .map(|r| r.reason);
            SampleVerdict {
                sample_id: c.id().to_string(),
                kept: reason.is_none(),
                reason,
            }
        })
        .collect();
    let manifest = RunManifest {
        samples,
        filter: result.stats,
        translation,
    };
    write_json(&out.join(MANIFEST), &manifest)?;

    let failed = manifest.translation.gateway.failed;
    if failed > 0 {
        log::warn!("{failed} gateway call(s) failed; see {}", out.join(MANIFEST).display());
    }
    for warning in &manifest.filter.warnings {
        log::warn!("{warning}");
    }
    println!(
        "translated {} {} sample(s) {}->{}: kept {}, rejected {}, removal rate {:.4}",
        manifest.filter.total,
        cfg.task,
        cfg.src_lang,
        cfg.tgt_lang,
        manifest.filter.kept,
        manifest.filter.rejected(),
        manifest.filter.removal_rate.to_f64()
    );
    Ok(manifest)
}

pub fn cmd_synthesize(cfg: &PipelineConfig, arms: &[Arm]) -> Outcome<Value> {
    let kept_path = cfg.output_dir.join(KEPT_PAIRS);
    if !kept_path.is_file() {
        return Err(Failure::Validation(anyhow!(
            "missing upstream artifact {}; run `stt translate` first",
            kept_path.display()
        )));
    }
    let kept = read_parallel_pairs(&kept_path, cfg.task).invalid()?;
    let d_src = source_dataset(cfg)?;
    let (src, tgt) = (cfg.src().invalid()?, cfg.tgt().invalid()?);
    let seeds = fewshot_seeds(cfg)?;
    prepare_output(cfg)?;

    let out = &cfg.output_dir;
    let mut files = Vec::new();
    let d_tgt = if arms.contains(&Arm::Tgt) {
        let d = build_target_dataset(&kept, cfg.task, &src, &tgt).invalid()?;
        stt_core::corpus::write_dataset(&d, &out.join(D_TGT)).runtime()?;
        files.push(D_TGT.to_string());
        Some(d)
    } else {
        None
    };
    let d_cs = if arms.contains(&Arm::Cs) {
        let d = build_code_switch(&kept, cfg.task, &src, &tgt, &cfg.instructions).invalid()?;
        write_examples(&d, &out.join(D_CS)).runtime()?;
        files.push(D_CS.to_string());
        Some(d)
    } else {
        None
    };
    let mix = assemble_training_mix(&d_src, d_tgt.as_ref(), d_cs.as_ref(), &seeds, &tgt, cfg.shuffle_seed).invalid()?;
    let label = mix_label(arms);
    let (mix_file, train_file) = (format!("mix_{label}.jsonl"), format!("train_{label}.jsonl"));
    write_examples(&mix, &out.join(&mix_file)).runtime()?;
    export_training_records(&mix, &out.join(&train_file)).runtime()?;
    files.extend([mix_file, train_file]);
    for warning in &mix.warnings {
        log::warn!("{warning}");
    }

    let summary = json!({
        "task": cfg.task,
        "arms": arms.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
        "mix": label,
        "kept_pairs": kept.len(),
        "examples": mix.len(),
        "components": mix.components,
        "files": files,
        "warnings": mix.warnings,
    });
    write_json(&out.join(SYNTHESIS), &summary)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(summary)
}

struct StatsColumn {
    label: String,
    stats: FilterStats,
}

fn load_stats(path: &Path) -> Outcome<StatsColumn> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))
        .invalid()?;
    let fallback = path.display().to_string();
    if text.trim().is_empty() {
        return Ok(StatsColumn {
            label: fallback,
            stats: filter_candidates(&[], &FilterConfig::default()).stats,
        });
    }
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("malformed manifest {}", path.display()))
        .invalid()?;
    let label = match value.pointer("/translation/tgt_lang").and_then(Value::as_str) {
        Some(tgt) => format!("{} ({tgt})", path.display()),
        None => fallback,
    };
    let stats = value.get("filter").cloned().unwrap_or(value);
    let stats: FilterStats = serde_json::from_value(stats)
        .with_context(|| format!("manifest {} has no filter statistics", path.display()))
        .invalid()?;
    Ok(StatsColumn { label, stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StatsFormat {
    Table,
    Json,
    Both,
}

fn stats_json(columns: &[StatsColumn]) -> Value {
    let rows: Vec<Value> = columns
        .iter()
        .map(|c| {
            let s = &c.stats;
            json!({
                "manifest": c.label,
                "total": s.total,
                "kept": s.kept,
                "rejected": s.rejected(),
                "removal_rate": s.removal_rate.to_f64(),
                "removal_rate_exact": s.removal_rate,
                "rejected_by_reason": s.rejected_by_reason,
                "fields_total": s.fields_total,
                "fields_rejected": s.fields_rejected(),
                "field_removal_rate": s.field_removal_rate.to_f64(),
                "fields_rejected_by_reason": s.fields_rejected_by_reason,
                "warnings": s.warnings,
            })
        })
        .collect();
    json!({ "manifests": rows })
}

/// One row per metric, one column per manifest.
fn stats_table(columns: &[StatsColumn]) -> String {
    let mut reasons: Vec<RejectionReason> = columns
        .iter()
        .flat_map(|c| c.stats.rejected_by_reason.keys().copied())
        .collect();
    reasons.sort();
    reasons.dedup();
    let mut rows: Vec<(String, Vec<String>)> = vec![
        (
            "total".into(),
            columns.iter().map(|c| c.stats.total.to_string()).collect(),
        ),
        (
            "kept".into(),
            columns.iter().map(|c| c.stats.kept.to_string()).collect(),
        ),
        (
            "rejected".into(),
            columns.iter().map(|c| c.stats.rejected().to_string()).collect(),
        ),
        (
            "removal_rate".into(),
            columns
                .iter()
                .map(|c| format!("{:.4}", c.stats.removal_rate.to_f64()))
                .collect(),
        ),
    ];
    for reason in reasons {
        rows.push((
            format!("  {reason}"),
            columns
                .iter()
                .map(|c| {
                    c.stats
                        .rejected_by_reason
                        .get(&reason)
                        .copied()
                        .unwrap_or(0)
                        .to_string()
                })
                .collect(),
        ));
    }
    rows.push((
        "field_removal_rate".into(),
        columns
            .iter()
            .map(|c| format!("{:.4}", c.stats.field_removal_rate.to_f64()))
            .collect(),
    ));
    let first = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("metric".len());
    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            rows.iter()
                .map(|(_, v)| v[i].len())
                .max()
                .unwrap_or(0)
                .max(c.label.len())
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "metric");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", c.label);
    }
    out.push('\n');
    for (metric, values) in rows {
        let _ = write!(out, "{metric:<first$}");
        for (v, w) in values.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
    }
    out
}

pub fn cmd_stats(paths: &[PathBuf], format: StatsFormat) -> Outcome {
    let columns = paths.iter().map(|p| load_stats(p)).collect::<Outcome<Vec<_>>>()?;
    if matches!(format, StatsFormat::Table | StatsFormat::Both) {
        print!("{}", stats_table(&columns));
    }
    if format == StatsFormat::Both {
        println!();
    }
    if matches!(format, StatsFormat::Json | StatsFormat::Both) {
        println!(
            "{}",
            serde_json::to_string_pretty(&stats_json(&columns)).expect("stats serialize")
        );
    }
    Ok(())
}

fn read_lines(path: &Path) -> Outcome<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .invalid()?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn cmd_bleu(
    hyp: &Path,
    reference: &Path,
    tokenizer: Option<BleuTokenizer>,
    lang: Option<&str>,
    smoothing: Smoothing,
) -> Outcome<Value> {
    let hyps = read_lines(hyp)?;
    let refs = read_lines(reference)?;
    let tokenizer =
        tokenizer.unwrap_or_else(|| lang.map(BleuTokenizer::for_language).unwrap_or(BleuTokenizer::Thirteen));
    let score = corpus_bleu(&hyps, &refs, tokenizer, smoothing)
        .with_context(|| format!("{} vs {}", hyp.display(), reference.display()))
        .invalid()?;
    let value = serde_json::to_value(&score).expect("score serializes");
    println!("{value}");
    Ok(value)
}

/// Text lines, or JSON Lines carrying strings or objects with one of `keys`.
fn read_items(path: &Path, keys: &[&str]) -> Outcome<Vec<String>> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        return read_lines(path);
    }
    let mut items = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Failure::Validation(anyhow!("{}:{}: {msg}", path.display(), i + 1));
        let value: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let text = match &value {
            Value::String(s) => s.clone(),
            Value::Object(map) => match keys.iter().find_map(|k| map.get(*k)) {
                Some(Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => return Err(bad(format!("expected one of the keys {keys:?}"))),
            },
            other => other.to_string(),
        };
        items.push(text);
    }
    Ok(items)
}

pub fn cmd_eval(task: TaskKind, predictions: &Path, gold: &Path, lang: Option<&str>) -> Outcome<Value> {
    let preds = read_items(predictions, &["output", "prediction"])?;
    let gold_keys: &[&str] = match task {
        TaskKind::Math => &["final_answer", "answer"],
        TaskKind::ExtractiveQa => &["answer_text", "answer"],
        TaskKind::Nli => &["label"],
    };
    let golds = read_items(gold, gold_keys)?;
    if preds.len() != golds.len() {
        return Err(Failure::Validation(anyhow!(
            "{} has {} item(s) but {} has {}",
            predictions.display(),
            preds.len(),
            gold.display(),
            golds.len()
        )));
    }
    let n = preds.len();
    let value = match task {
        TaskKind::Math => {
            let extracted: Vec<Option<String>> = preds.iter().map(|p| extract_final_number(p).ok()).collect();
            let gold_numbers: Vec<String> = golds
                .iter()
                .map(|g| extract_final_number(g).unwrap_or_else(|_| g.trim().to_string()))
                .collect();
            let guesses: Vec<String> = extracted.iter().map(|e| e.clone().unwrap_or_default()).collect();
            let accuracy = exact_match_accuracy(&guesses, &gold_numbers).invalid()?;
            json!({
                "task": task,
                "n": n,
                "accuracy": accuracy.to_f64(),
                "accuracy_exact": accuracy,
                "unparsed": extracted.iter().filter(|e| e.is_none()).count(),
            })
        }
        TaskKind::Nli => {
            let mut correct = 0usize;
            let mut unparsed = 0usize;
            for (p, g) in preds.iter().zip(&golds) {
                let g: NliLabel = g
                    .trim()
                    .parse()
                    .map_err(|e| Failure::Validation(anyhow!("{}: {e}", gold.display())))?;
                match nli_label_parse(p) {
                    Ok(label) if label == g => correct += 1,
                    Ok(_) => {}
                    Err(_) => unparsed += 1,
                }
            }
            json!({
                "task": task,
                "n": n,
                "accuracy": if n == 0 { 0.0 } else { correct as f64 / n as f64 },
                "correct": correct,
                "unparsed": unparsed,
            })
        }
        TaskKind::ExtractiveQa => {
            let tokenizer = lang.map(QaTokenizer::for_language).unwrap_or_default();
            let scores: Vec<_> = preds
                .iter()
                .zip(&golds)
                .map(|(p, g)| qa_em_f1(p, g, tokenizer))
                .collect();
            let mean = |f: &dyn Fn(&stt_core::evaluate::QaScore) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    scores.iter().map(f).sum::<f64>() / n as f64
                }
            };
            json!({
                "task": task,
                "n": n,
                "exact_match": mean(&|s| if s.exact_match { 1.0 } else { 0.0 }),
                "f1": mean(&|s| s.f1.to_f64()),
                "tokenizer": tokenizer,
            })
        }
    };
    println!("{value}");
    Ok(value)
}

fn read_scores(path: &Path) -> Outcome<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .invalid()?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::Validation(anyhow!("{}: {t:?} is not a number", path.display())))
        })
        .collect()
}

pub fn cmd_ttest(a: &Path, b: &Path) -> Outcome<Value> {
    let (xs, ys) = (read_scores(a)?, read_scores(b)?);
    let result = welch_t_test(&xs, &ys).invalid()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let value = json!({
        "t_statistic": result.t_statistic,
        "degrees_of_freedom": result.degrees_of_freedom,
        "p_value": result.p_value,
        "n_a": xs.len(),
        "n_b": ys.len(),
        "mean_a": mean(&xs),
        "mean_b": mean(&ys),
    });
    println!("{value}");
    Ok(value)
}
