use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: malformed record{}: field `{field}`: {message}", id.as_ref().map(|i| format!(" `{i}`")).unwrap_or_default())]
    Malformed { file: String, line: usize, id: Option<String>, field: String, message: String },
    #[error("duplicate article_id `{0}`")]
    Duplicate(String),
    #[error("no article records found under {0}")]
    Empty(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph API transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("article `{0}` not found by the graph API")]
    NotFound(String),
    #[error("unexpected graph API payload: {0}")]
    Payload(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssemblyError {
    #[error("assembly infeasible: {0}")]
    Infeasible(String),
    #[error("article `{0}` is not in the corpus")]
    DanglingReference(String),
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("article `{0}` has an empty author list")]
    EmptyAuthors(String),
    #[error("article `{0}` is not in the corpus")]
    MissingArticle(String),
    #[error("cannot read database dump {path}: {message}")]
    Dump { path: PathBuf, message: String },
    #[error(transparent)]
    Sql(#[from] lcqa_sql::SqlError),
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot load template library: {0}")]
    Load(String),
    #[error("template `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("requested {requested} templates but the library has {available}")]
    TooMany { requested: usize, available: usize },
    #[error("template `{id}` rejected: {reason}")]
    Rejected { id: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("prompt exceeds the model's context window")]
    ContextLength,
    #[error("cannot decode endpoint response: {0}")]
    Decode(String),
    #[error("missing API key: environment variable `{0}` is not set")]
    MissingKey(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport { retryable, .. } => *retryable,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("stage `{stage}` needs the outputs of `{needs}`; run `lcqa {needs}` first")]
    MissingPrerequisite { stage: String, needs: String },
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
    #[error("endpoint failure during `{stage}`: {source}")]
    Endpoint { stage: String, source: LlmError },
}
