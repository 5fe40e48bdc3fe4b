//! Pipeline configuration file and its validation.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use stt_core::corpus::{LanguageTag, TaskKind};
use stt_core::filter::FilterConfig;
use stt_core::gateway::{BackendConfig, BackendKind};
use stt_core::prompting::{InstructionTable, DEFAULT_SHOTS};
use stt_core::rational::Rational;
use stt_core::translate::FieldBudgets;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

fn default_k() -> usize {
    DEFAULT_SHOTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotConfig {
    /// Parallel pairs to sample banks and seed samples from.
    #[serde(default)]
    pub parallel: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Required when `parallel` is set.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Prebuilt banks by field name; these win over sampled ones.
    #[serde(default)]
    pub banks: BTreeMap<String, PathBuf>,
    /// Target-language samples added to every mix when banks are given directly.
    #[serde(default)]
    pub seed_samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageOverride {
    pub display_name: String,
    pub char_weight: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: TaskKind,
    pub src_lang: String,
    pub tgt_lang: String,
    /// Source-language training data.
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub subset: Option<SubsetConfig>,
    pub backend: BackendConfig,
    /// Per-field `max_new_tokens` overrides.
    #[serde(default)]
    pub budgets: BTreeMap<String, u32>,
    #[serde(default)]
    pub filter: FilterConfig,
    pub few_shot: FewShotConfig,
    /// Code-switch instruction per language code.
    #[serde(default)]
    pub instructions: InstructionTable,
    /// Metadata for languages without built-in defaults.
    #[serde(default)]
    pub languages: BTreeMap<String, LanguageOverride>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub in_flight: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl PipelineConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.resolve_paths(&base);
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.input);
        join(&mut self.output_dir);
        if let Some(p) = self.backend.mock_script.as_mut() {
            join(p);
        }
        if let Some(p) = self.few_shot.parallel.as_mut() {
            join(p);
        }
        if let Some(p) = self.few_shot.seed_samples.as_mut() {
            join(p);
        }
        self.few_shot.banks.values_mut().for_each(join);
    }

    fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.shuffle_seed = seed;
            if self.few_shot.parallel.is_some() {
                self.few_shot.seed = Some(seed);
            }
            if let Some(subset) = self.subset.as_mut() {
                subset.seed = seed;
            }
        }
        if let Some(cap) = overrides.in_flight {
            self.backend.max_in_flight = cap;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let src = self.language(&self.src_lang)?;
        let tgt = self.language(&self.tgt_lang)?;
        if src.code() == tgt.code() {
            bail!("src_lang and tgt_lang are both {:?}", src.code());
        }
        self.backend.validate()?;
        if self.backend.kind == BackendKind::Remote && self.backend.mock_script.is_some() {
            bail!("backend.mock_script is only valid with kind = \"mock\"");
        }
        self.filter.validate()?;
        let fields = self.task.translatable_fields();
        for field in self.budgets.keys().chain(self.few_shot.banks.keys()) {
            if !fields.contains(&field.as_str()) {
                bail!(
                    "field {field:?} is not translated for task {}; expected one of {fields:?}",
                    self.task
                );
            }
        }
        if self.budgets.values().any(|&n| n == 0) {
            bail!("budgets must be at least 1 token");
        }
        let fs = &self.few_shot;
        match &fs.parallel {
            Some(_) if fs.seed.is_none() => bail!("few_shot.seed is required with few_shot.parallel"),
            Some(_) if fs.k == 0 => bail!("few_shot.k must be at least 1"),
            Some(_) => {}
            None => {
                if let Some(missing) = fields.iter().find(|f| !fs.banks.contains_key(**f)) {
                    bail!("few_shot needs `parallel` or a bank for every field; no bank for {missing:?}");
                }
            }
        }
        let mut paths: Vec<&Path> = vec![&self.input];
        paths.extend(self.backend.mock_script.as_deref());
        paths.extend(fs.parallel.as_deref());
        paths.extend(fs.seed_samples.as_deref());
        paths.extend(fs.banks.values().map(PathBuf::as_path));
        for path in paths {
            if !path.is_file() {
                bail!("file not found: {}", path.display());
            }
        }
        Ok(())
    }

    pub fn language(&self, code: &str) -> Result<LanguageTag> {
        let tag = match self.languages.get(code) {
            Some(o) => LanguageTag::new(code, o.display_name.clone(), o.char_weight)?,
            None => LanguageTag::from_code(code)?,
        };
        Ok(tag)
    }

    pub fn src(&self) -> Result<LanguageTag> {
        self.language(&self.src_lang)
    }

    pub fn tgt(&self) -> Result<LanguageTag> {
        self.language(&self.tgt_lang)
    }

    pub fn budgets(&self) -> FieldBudgets {
        self.budgets
            .iter()
            .fold(FieldBudgets::defaults(self.task), |b, (field, n)| {
                b.with_override(field, *n)
            })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved config next to the run outputs.
    pub fn write_resolved(&self) -> Result<()> {
        let path = self.output_dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()).with_context(|| format!("cannot write {}", path.display()))
    }
}
