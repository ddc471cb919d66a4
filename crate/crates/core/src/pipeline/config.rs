use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collection::{Level, PlanConfig};
use crate::corpus::{HttpGraphConfig, TokenizerSpec};
use crate::error::ConfigError;
use crate::eval::ContextMode;
use crate::llm::EndpointConfig;
use crate::template::{SelectionMode, Split, TemplateLibrary, DEFAULT_TEMPLATES_PER_COLLECTION};

use super::Stage;

pub const BUNDLED: &str = "bundled";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mandatory; there is no wall-clock seeding.
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub tokenizer: TokenizerSpec,
    #[serde(default)]
    pub collections: CollectionsConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub converter: ConverterConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Directory the config was read from; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterSource {
    /// One cluster holding the whole corpus.
    Whole,
    /// Seed expansion over the corpus' own reference lists.
    #[default]
    LocalGraph,
    /// Seed expansion through a scholarly graph API.
    HttpGraph,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// File or directory of JSON-lines records, or "bundled" for the mini corpus.
    pub path: String,
    pub clusters: ClusterSource,
    /// Number of seed articles to expand; 0 expands every article.
    pub seeds: usize,
    pub graph: HttpGraphConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            path: BUNDLED.into(),
            clusters: ClusterSource::default(),
            seeds: 0,
            graph: HttpGraphConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionsConfig {
    pub levels: Vec<Level>,
    pub per_level: usize,
    pub random_to_traversal: f64,
    pub retries: usize,
}

impl Default for CollectionsConfig {
    fn default() -> Self {
        let p = PlanConfig::default();
        CollectionsConfig {
            levels: vec![Level::K64, Level::K128, Level::K512, Level::M1],
            per_level: p.per_level,
            random_to_traversal: p.random_to_traversal,
            retries: p.retries,
        }
    }
}

impl CollectionsConfig {
    pub fn plan(&self) -> PlanConfig {
        PlanConfig { per_level: self.per_level, random_to_traversal: self.random_to_traversal, retries: self.retries }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Template library JSON, or "bundled".
    pub templates: String,
    pub templates_per_collection: usize,
    pub selection: SelectionMode,
    pub drop_tie_affected: bool,
    /// Share of collections assigned to the test split.
    pub test_fraction: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            templates: BUNDLED.into(),
            templates_per_collection: DEFAULT_TEMPLATES_PER_COLLECTION,
            selection: SelectionMode::Uniform,
            drop_tie_affected: false,
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConverterKind {
    #[default]
    Http,
    /// Deterministic mock: echoes SQL through the question.
    Echo,
    /// Deterministic mock whose back-translation is always `fixed_sql`.
    FixedSql,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConverterConfig {
    pub kind: ConverterKind,
    pub max_attempts: usize,
    pub fixed_sql: String,
    pub endpoint: EndpointConfig,
}

impl Default for ConverterConfig {
    fn default() -> Self {
        ConverterConfig {
            kind: ConverterKind::default(),
            max_attempts: crate::nl::DEFAULT_MAX_ATTEMPTS,
            fixed_sql: "SELECT COUNT(*) FROM articles".into(),
            endpoint: EndpointConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalModelKind {
    #[default]
    Http,
    GoldEcho,
    Uuid,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalModelConfig {
    pub name: String,
    #[serde(default)]
    pub kind: EvalModelKind,
    #[serde(default)]
    pub constant: String,
    #[serde(default)]
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub context_modes: Vec<ContextMode>,
    pub samples: usize,
    pub splits: Vec<Split>,
    /// Restrict to these levels; empty means all.
    pub levels: Vec<Level>,
    pub models: Vec<EvalModelConfig>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            context_modes: vec![ContextMode::FullText, ContextMode::DbTables],
            samples: crate::eval::DEFAULT_SAMPLES,
            splits: vec![Split::Test],
            levels: Vec::new(),
            models: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("config validated")
    }

    pub fn resolve(&self, p: impl AsRef<Path>) -> PathBuf {
        let p = p.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn library(&self) -> Result<TemplateLibrary, ConfigError> {
        if self.generation.templates == BUNDLED {
            Ok(TemplateLibrary::bundled())
        } else {
            TemplateLibrary::load(&self.resolve(&self.generation.templates))
                .map_err(|e| ConfigError::invalid("generation.templates", e.to_string()))
        }
    }

    /// Checks every field needed by `stages` before anything runs.
    pub fn validate(&self, stages: &[Stage]) -> Result<(), ConfigError> {
        if self.seed.is_none() {
            return Err(ConfigError::invalid("seed", "a seed is required"));
        }
        if self.corpus.path != BUNDLED && !self.resolve(&self.corpus.path).exists() {
            return Err(ConfigError::invalid(
                "corpus.path",
                format!("{} does not exist", self.resolve(&self.corpus.path).display()),
            ));
        }
        if let TokenizerSpec::VocabFile { vocab_path } = &self.tokenizer {
            if !self.resolve(vocab_path).exists() {
                return Err(ConfigError::invalid(
                    "tokenizer.vocab_path",
                    format!("{} does not exist", vocab_path.display()),
                ));
            }
        }
        let c = &self.collections;
        if c.levels.is_empty() {
            return Err(ConfigError::invalid("collections.levels", "at least one level is required"));
        }
        if c.per_level == 0 {
            return Err(ConfigError::invalid("collections.per_level", "must be positive"));
        }
        if !(c.random_to_traversal.is_finite() && c.random_to_traversal >= 0.0) {
            return Err(ConfigError::invalid("collections.random_to_traversal", "must be a non-negative number"));
        }
        let g = &self.generation;
        if g.templates_per_collection == 0 {
            return Err(ConfigError::invalid("generation.templates_per_collection", "must be positive"));
        }
        let lib = self.library()?;
        if g.templates_per_collection > lib.len() {
            return Err(ConfigError::invalid(
                "generation.templates_per_collection",
                format!("{} exceeds the library size {}", g.templates_per_collection, lib.len()),
            ));
        }
        if !(0.0..=1.0).contains(&g.test_fraction) {
            return Err(ConfigError::invalid("generation.test_fraction", "must lie in [0, 1]"));
        }
        if self.converter.max_attempts == 0 {
            return Err(ConfigError::invalid("converter.max_attempts", "must be positive"));
        }
        if self.converter.kind == ConverterKind::FixedSql && lcqa_sql::parse(&self.converter.fixed_sql).is_err() {
            return Err(ConfigError::invalid("converter.fixed_sql", "does not parse"));
        }
        let e = &self.evaluation;
        if e.samples == 0 {
            return Err(ConfigError::invalid("evaluation.samples", "must be at least 1"));
        }
        if e.context_modes.is_empty() {
            return Err(ConfigError::invalid("evaluation.context_modes", "at least one mode is required"));
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &e.models {
            if m.name.is_empty() || !m.name.chars().all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch)) {
                return Err(ConfigError::invalid(
                    "evaluation.models.name",
                    format!("`{}` must be non-empty [A-Za-z0-9._-]", m.name),
                ));
            }
            if !names.insert(&m.name) {
                return Err(ConfigError::invalid("evaluation.models.name", format!("duplicate model `{}`", m.name)));
            }
        }
        let needs_key = |ep: &EndpointConfig, field: &str| -> Result<(), ConfigError> {
            if let Some(var) = &ep.api_key_env {
                if std::env::var(var).is_err() {
                    return Err(ConfigError::invalid(field, format!("environment variable `{var}` is not set")));
                }
            }
            Ok(())
        };
        if stages.contains(&Stage::Validate) && self.converter.kind == ConverterKind::Http {
            needs_key(&self.converter.endpoint, "converter.endpoint.api_key_env")?;
        }
        if stages.contains(&Stage::Evaluate) {
            if e.models.is_empty() {
                return Err(ConfigError::invalid("evaluation.models", "the evaluate stage needs at least one model"));
            }
            for m in e.models.iter().filter(|m| m.kind == EvalModelKind::Http) {
                needs_key(&m.endpoint, "evaluation.models.endpoint.api_key_env")?;
            }
        }
        if stages.contains(&Stage::Assemble) && self.corpus.clusters == ClusterSource::HttpGraph {
            if let Some(var) = &self.corpus.graph.api_key_env {
                if std::env::var(var).is_err() {
                    log::warn!("graph API key variable `{var}` is not set; requests will be unauthenticated");
                }
            }
        }
        Ok(())
    }
}
