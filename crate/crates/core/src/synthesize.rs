//! Target-language, code-switched and mixed training sets, and their export
//! as trainer-ready records.
//!
//! Code-switched examples pair the input of one language with the output of
//! the other, so they cannot be [`Sample`]s: a QA answer is generally not a
//! span of the other language's context. Every training set is therefore an
//! [`ExampleSet`] of input/output projections tagged with their languages.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, DatasetRole, LanguageTag, ParallelPair, Sample, TaskInput, TaskKind, TaskOutput};
use crate::prompting::{render_code_switch_instruction, InstructionTable};

pub const NLI_QUESTION: &str = "What is their logical relation? Entailment, Neutral or Contradition.";
pub const CS_SRC_INPUT_SUFFIX: &str = "#cs-st";
pub const CS_TGT_INPUT_SUFFIX: &str = "#cs-ts";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthesizeError {
    #[error("pair {id} is {found}, expected {expected}")]
    MixedPairs {
        id: String,
        expected: String,
        found: String,
    },
    #[error("component {component} is {found}, expected {expected}")]
    TaskMismatch {
        component: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("example {0} has an empty output")]
    EmptyOutput(String),
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Src,
    Tgt,
    CsSrcInput,
    CsTgtInput,
    FewshotSeed,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::Src => "src",
            Origin::Tgt => "tgt",
            Origin::CsSrcInput => "cs_src_input",
            Origin::CsTgtInput => "cs_tgt_input",
            Origin::FewshotSeed => "fewshot_seed",
        }
    }

    /// The (input, output) languages this origin implies for a source/target pair.
    pub fn languages<'a>(&self, src: &'a str, tgt: &'a str) -> (&'a str, &'a str) {
        match self {
            Origin::Src => (src, src),
            Origin::Tgt | Origin::FewshotSeed => (tgt, tgt),
            Origin::CsSrcInput => (src, tgt),
            Origin::CsTgtInput => (tgt, src),
        }
    }
}

/// One supervised example: an input projection, an output projection and their languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub origin: Origin,
    pub input_lang: String,
    pub output_lang: String,
    /// Answer-language instruction placed before the rendered input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    /// False when the output is not a span of the input context.
    pub extractable: bool,
    pub input: TaskInput,
    pub output: TaskOutput,
}

impl Example {
    pub fn from_sample(sample: &Sample, lang: &str, origin: Origin) -> Self {
        Example {
            id: sample.id().to_string(),
            origin,
            input_lang: lang.to_string(),
            output_lang: lang.to_string(),
            instruction: None,
            extractable: sample.task() == TaskKind::ExtractiveQa,
            input: sample.input_projection(),
            output: sample.output_projection(),
        }
    }

    pub fn task(&self) -> TaskKind {
        self.input.task()
    }

    pub fn render(&self) -> Result<TrainingRecord, SynthesizeError> {
        let body = render_input(&self.input);
        let input = match &self.instruction {
            Some(instruction) => format!("{instruction}\n{body}"),
            None => body,
        };
        let output = render_output(&self.output);
        if output.trim().is_empty() {
            return Err(SynthesizeError::EmptyOutput(self.id.clone()));
        }
        Ok(TrainingRecord {
            input,
            output,
            loss_on_output_only: true,
            input_lang: self.input_lang.clone(),
            output_lang: self.output_lang.clone(),
            origin: self.origin,
        })
    }
}

/// Task prompt for an input projection.
pub fn render_input(input: &TaskInput) -> String {
    match input {
        TaskInput::Math { question } => question.clone(),
        TaskInput::Qa { context, question } => format!("Context: {context}\nQuestion: {question}"),
        TaskInput::Nli { premise, hypothesis } => {
            format!("Premise: {premise}\nHypothesis: {hypothesis}\n{NLI_QUESTION}")
        }
    }
}

/// Target text for an output projection.
pub fn render_output(output: &TaskOutput) -> String {
    match output {
        TaskOutput::Math { rationale, .. } => rationale.clone(),
        TaskOutput::Qa { answer_text, .. } => answer_text.clone(),
        TaskOutput::Nli { label } => label.display_name().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSet {
    pub task: TaskKind,
    pub role: DatasetRole,
    pub examples: Vec<Example>,
    /// Example counts per component, for manifests.
    pub components: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl ExampleSet {
    pub fn new(task: TaskKind, role: DatasetRole) -> Self {
        ExampleSet {
            task,
            role,
            examples: Vec::new(),
            components: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn from_dataset(dataset: &Dataset, origin: Origin) -> Self {
        let mut set = ExampleSet::new(dataset.task(), dataset.role());
        let lang = dataset.language().code();
        set.examples = dataset
            .samples()
            .iter()
            .map(|s| Example::from_sample(s, lang, origin))
            .collect();
        set.components.insert(origin.as_str().to_string(), set.examples.len());
        set
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn training_records(&self) -> Result<Vec<TrainingRecord>, SynthesizeError> {
        self.examples.iter().map(Example::render).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingRecord {
    pub input: String,
    pub output: String,
    pub loss_on_output_only: bool,
    pub input_lang: String,
    pub output_lang: String,
    pub origin: Origin,
}

fn check_pairs(kept: &[ParallelPair], task: TaskKind, src: &str, tgt: &str) -> Result<(), SynthesizeError> {
    for pair in kept {
        if pair.task() != task || pair.src_lang() != src || pair.tgt_lang() != tgt {
            return Err(SynthesizeError::MixedPairs {
                id: pair.id().to_string(),
                expected: format!("{task} {src}->{tgt}"),
                found: format!("{} {}->{}", pair.task(), pair.src_lang(), pair.tgt_lang()),
            });
        }
    }
    Ok(())
}

/// The target side of the kept pairs, in order.
pub fn build_target_dataset(
    kept: &[ParallelPair],
    task: TaskKind,
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
) -> Result<Dataset, SynthesizeError> {
    check_pairs(kept, task, src_lang.code(), tgt_lang.code())?;
    let samples = kept.iter().map(|p| p.tgt().clone()).collect();
    Dataset::new(task, tgt_lang.clone(), DatasetRole::Target, samples)
        .map_err(|e| SynthesizeError::Io(e.to_string()))
        .map(|d| d.with_provenance(format!("self-translated from {}", src_lang.code())))
}

/// Both cross-language pairings of every kept pair: source input with target
/// output, then target input with source output.
pub fn build_code_switch(
    kept: &[ParallelPair],
    task: TaskKind,
    src_lang: &LanguageTag,
    tgt_lang: &LanguageTag,
    instructions: &InstructionTable,
) -> Result<ExampleSet, SynthesizeError> {
    check_pairs(kept, task, src_lang.code(), tgt_lang.code())?;
    let mut set = ExampleSet::new(task, DatasetRole::CodeSwitched);
    let wants_instruction = task.output_is_natural_language();
    let instruction_for = |lang: &LanguageTag, warnings: &mut Vec<String>| {
        wants_instruction.then(|| {
            let instruction = render_code_switch_instruction(lang, instructions);
            if instruction.fallback {
                warnings.push(format!(
                    "no instruction for {}; using the English template",
                    lang.code()
                ));
            }
            instruction.text
        })
    };
    let to_tgt = instruction_for(tgt_lang, &mut set.warnings);
    let to_src = instruction_for(src_lang, &mut set.warnings);
    for pair in kept {
        for (input, output, origin, suffix, instruction) in [
            (pair.src(), pair.tgt(), Origin::CsSrcInput, CS_SRC_INPUT_SUFFIX, &to_tgt),
            (pair.tgt(), pair.src(), Origin::CsTgtInput, CS_TGT_INPUT_SUFFIX, &to_src),
        ] {
            let (input_lang, output_lang) = origin.languages(src_lang.code(), tgt_lang.code());
            let mut output = output.output_projection();
            if let TaskOutput::Qa { answer_start, .. } = &mut output {
                *answer_start = None;
            }
            set.examples.push(Example {
                id: format!("{}{suffix}", pair.id()),
                origin,
                input_lang: input_lang.to_string(),
                output_lang: output_lang.to_string(),
                instruction: instruction.clone(),
                extractable: false,
                input: input.input_projection(),
                output,
            });
        }
    }
    set.components.insert(Origin::CsSrcInput.as_str().into(), kept.len());
    set.components.insert(Origin::CsTgtInput.as_str().into(), kept.len());
    Ok(set)
}

/// Concatenates the requested components with the few-shot seeds and shuffles.
///
/// The seeds are always included so that every arm sees the same labelled
/// target-language data.
pub fn assemble_training_mix(
    d_src: &Dataset,
    d_tgt: Option<&Dataset>,
    d_cs: Option<&ExampleSet>,
    seeds: &[Sample],
    seed_lang: &LanguageTag,
    shuffle_seed: u64,
) -> Result<ExampleSet, SynthesizeError> {
    let task = d_src.task();
    let mismatch = |component: &str, found: TaskKind| SynthesizeError::TaskMismatch {
        component: component.to_string(),
        expected: task,
        found,
    };
    let mut mix = ExampleSet::from_dataset(d_src, Origin::Src);
    if let Some(d_tgt) = d_tgt {
        if d_tgt.task() != task {
            return Err(mismatch("tgt", d_tgt.task()));
        }
        let part = ExampleSet::from_dataset(d_tgt, Origin::Tgt);
        mix.components.insert(Origin::Tgt.as_str().into(), part.len());
        mix.examples.extend(part.examples);
    }
    if let Some(d_cs) = d_cs {
        if d_cs.task != task {
            return Err(mismatch("cs", d_cs.task));
        }
        mix.components.insert("cs".into(), d_cs.len());
        mix.examples.extend(d_cs.examples.iter().cloned());
        mix.warnings.extend(d_cs.warnings.iter().cloned());
    }
    for seed in seeds {
        if seed.task() != task {
            return Err(mismatch("fewshot_seed", seed.task()));
        }
        mix.examples
            .push(Example::from_sample(seed, seed_lang.code(), Origin::FewshotSeed));
    }
    mix.components.insert(Origin::FewshotSeed.as_str().into(), seeds.len());
    mix.examples.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
    mix.role = DatasetRole::Mixed;
    Ok(mix)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), SynthesizeError> {
    let io = |e: std::io::Error| SynthesizeError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SynthesizeError> {
    let file = std::fs::File::open(path).map_err(|e| SynthesizeError::Io(format!("{}: {e}", path.display())))?;
    let mut items = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SynthesizeError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| SynthesizeError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(items)
}

/// Renders every example with the task templates and writes one record per line.
pub fn export_training_records(set: &ExampleSet, path: &Path) -> Result<(), SynthesizeError> {
    write_lines(path, &set.training_records()?)
}

pub fn read_training_records(path: &Path) -> Result<Vec<TrainingRecord>, SynthesizeError> {
    read_lines(path)
}

pub fn write_examples(set: &ExampleSet, path: &Path) -> Result<(), SynthesizeError> {
    write_lines(path, &set.examples)
}

pub fn read_examples(path: &Path) -> Result<Vec<Example>, SynthesizeError> {
    read_lines(path)
}
