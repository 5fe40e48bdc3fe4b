//! `stt`: translate training data with a completion backend, filter it, and
//! assemble target-language and code-switched training mixes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stt_core::corpus::TaskKind;
use stt_core::evaluate::{BleuTokenizer, Smoothing};

use commands::{Arm, Classify, Failure, Outcome, StatsFormat};
use config::{Overrides, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "stt", version, about = "Self-translated training data pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides backend.max_in_flight.
    #[arg(long)]
    in_flight: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Outcome<PipelineConfig> {
        let overrides = Overrides {
            seed: self.seed,
            in_flight: self.in_flight,
            output_dir: self.output_dir.clone(),
        };
        PipelineConfig::load(&self.config, &overrides).invalid()
    }
}

#[derive(Debug, Clone)]
struct Arms(Vec<Arm>);

fn arms(text: &str) -> Result<Arms, String> {
    commands::parse_arms(text).map(Arms)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Translate the training data, filter it, and write candidates and a manifest.
    Translate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build D_tgt and/or D_cs from kept pairs and assemble the training mix.
    Synthesize {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of {tgt, cs}; empty for the baseline mix.
        #[arg(long, value_parser = arms, default_value = "tgt")]
        arms: Arms,
    },
    /// translate followed by synthesize.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = arms, default_value = "tgt")]
        arms: Arms,
    },
    /// Filter statistics from one or more manifests.
    Stats {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        format: StatsFormat,
    },
    /// Corpus BLEU between a hypothesis and a reference file, one segment per line.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// 13a, zh or char; chosen from --lang when absent.
        #[arg(long)]
        tokenizer: Option<BleuTokenizer>,
        #[arg(long)]
        lang: Option<String>,
        /// none, exp, floor (0.1) or add-k (1).
        #[arg(long, default_value = "exp")]
        smoothing: Smoothing,
    },
    /// Task accuracy of model outputs against gold answers.
    Eval {
        #[arg(long)]
        task: TaskKind,
        /// Plain text (one per line) or JSON Lines with an `output` field.
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Selects the QA tokenizer.
        #[arg(long)]
        lang: Option<String>,
    },
    /// Welch's t-test between two files of scores.
    Ttest { a: PathBuf, b: PathBuf },
}

fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Translate { run } => commands::cmd_translate(&run.load()?).map(drop),
        Command::Synthesize { run, arms } => commands::cmd_synthesize(&run.load()?, &arms.0).map(drop),
        Command::Run { run, arms } => {
            let cfg = run.load()?;
            commands::cmd_translate(&cfg)?;
            commands::cmd_synthesize(&cfg, &arms.0).map(drop)
        }
        Command::Stats { manifests, format } => commands::cmd_stats(&manifests, format),
        Command::Bleu {
            hyp,
            reference,
            tokenizer,
            lang,
            smoothing,
        } => commands::cmd_bleu(&hyp, &reference, tokenizer, lang.as_deref(), smoothing).map(drop),
        Command::Eval {
            task,
            predictions,
            gold,
            lang,
        } => commands::cmd_eval(task, &predictions, &gold, lang.as_deref()).map(drop),
        Command::Ttest { a, b } => commands::cmd_ttest(&a, &b).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let kind = match failure {
                Failure::Validation(_) => "invalid input",
                Failure::Runtime(_) => "run failed",
            };
            eprintln!("error ({kind}): {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
