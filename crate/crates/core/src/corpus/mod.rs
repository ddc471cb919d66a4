//! Article corpora: loading, validation, token counting and seed expansion.

mod graph;
mod tokenizer;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

pub use graph::{expand_seed, ArticleCluster, GraphApi, HttpGraph, HttpGraphConfig, LocalGraph};
pub use tokenizer::{tokenize_count, CharsPerToken, Tokenizer, TokenizerSpec, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subject {
    CS,
    Economics,
    EE,
    Math,
    Physics,
    Biology,
    Finance,
    Statistics,
}

impl Subject {
    pub const ALL: [Subject; 8] = [
        Subject::CS,
        Subject::Economics,
        Subject::EE,
        Subject::Math,
        Subject::Physics,
        Subject::Biology,
        Subject::Finance,
        Subject::Statistics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::CS => "CS",
            Subject::Economics => "Economics",
            Subject::EE => "EE",
            Subject::Math => "Math",
            Subject::Physics => "Physics",
            Subject::Biology => "Biology",
            Subject::Finance => "Finance",
            Subject::Statistics => "Statistics",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subject::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown subject `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub title: String,
    pub authors: Vec<String>,
    pub reference_ids: Vec<String>,
    pub full_text: String,
    pub subject: Subject,
    pub token_count: u64,
}

/// On-disk record. Full text is inline or a path relative to the file.
#[derive(Debug, Deserialize)]
struct RawRecord {
    article_id: Option<serde_json::Value>,
    title: Option<serde_json::Value>,
    authors: Option<serde_json::Value>,
    #[serde(default)]
    reference_ids: Option<serde_json::Value>,
    full_text: Option<serde_json::Value>,
    full_text_path: Option<String>,
    subject: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub article_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub files: Vec<String>,
    pub records: usize,
    pub loaded: usize,
    pub dropped: Vec<DroppedRecord>,
    /// Self-references and duplicate reference ids removed during load.
    pub references_removed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(articles: Vec<Article>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(articles.len());
        for (i, a) in articles.iter().enumerate() {
            if index.insert(a.article_id.clone(), i).is_some() {
                return Err(CorpusError::Duplicate(a.article_id.clone()));
            }
        }
        Ok(Corpus { articles, index })
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.articles.iter().map(|a| a.article_id.as_str())
    }

    pub fn total_tokens(&self) -> u64 {
        self.articles.iter().map(|a| a.token_count).sum()
    }
}

enum Parsed {
    Ok(Article, usize),
    Dropped(DroppedRecord),
}

fn field_err(file: &str, line: usize, id: Option<&str>, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        file: file.to_string(),
        line,
        id: id.map(str::to_string),
        field: field.to_string(),
        message: message.into(),
    }
}

fn string_list(v: &serde_json::Value) -> Option<Vec<String>> {
    v.as_array()?.iter().map(|x| x.as_str().map(str::to_string)).collect()
}

fn parse_record(
    raw_line: &str,
    file: &str,
    line: usize,
    base: &Path,
    tokenizer: &Tokenizer,
) -> Result<Parsed, CorpusError> {
    let raw: RawRecord =
        serde_json::from_str(raw_line).map_err(|e| field_err(file, line, None, "<record>", e.to_string()))?;
    let id = match &raw.article_id {
        Some(serde_json::Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(serde_json::Value::Number(n)) => n.to_string(),
        _ => return Err(field_err(file, line, None, "article_id", "missing or not a non-empty string")),
    };
    let idr = Some(id.as_str());
    let title = raw
        .title
        .as_ref()
        .and_then(|t| t.as_str())
        .ok_or_else(|| field_err(file, line, idr, "title", "missing or not a string"))?
        .to_string();
    let authors = raw
        .authors
        .as_ref()
        .and_then(string_list)
        .ok_or_else(|| field_err(file, line, idr, "authors", "missing or not a list of strings"))?;
    if authors.is_empty() {
        return Err(field_err(file, line, idr, "authors", "author list is empty"));
    }
    let refs = match &raw.reference_ids {
        None | Some(serde_json::Value::Null) => Vec::new(),
        Some(v) => {
            string_list(v).ok_or_else(|| field_err(file, line, idr, "reference_ids", "not a list of strings"))?
        }
    };
    let subject = raw
        .subject
        .as_ref()
        .and_then(|s| s.as_str())
        .ok_or_else(|| field_err(file, line, idr, "subject", "missing or not a string"))?
        .parse::<Subject>()
        .map_err(|m| field_err(file, line, idr, "subject", m))?;

    let full_text = match (&raw.full_text, &raw.full_text_path) {
        (Some(serde_json::Value::String(t)), _) if !t.trim().is_empty() => Some(t.clone()),
        (Some(v), _) if !v.is_null() && !v.is_string() => {
            return Err(field_err(file, line, idr, "full_text", "not a string"));
        }
        (_, Some(p)) => match std::fs::read_to_string(base.join(p)) {
            Ok(t) if !t.trim().is_empty() => Some(t),
            _ => None,
        },
        _ => None,
    };
    let Some(full_text) = full_text else {
        return Ok(Parsed::Dropped(DroppedRecord { article_id: id, reason: "no full text".into() }));
    };

    let mut seen = HashSet::new();
    let before = refs.len();
    let reference_ids: Vec<String> = refs.into_iter().filter(|r| *r != id && seen.insert(r.clone())).collect();
    let removed = before - reference_ids.len();
    let token_count = tokenizer.count(&full_text);
    Ok(Parsed::Ok(Article { article_id: id, title, authors, reference_ids, full_text, subject, token_count }, removed))
}

fn record_files(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let io = |e| CorpusError::Io { path: path.to_path_buf(), source: e };
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("json")))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every JSON-lines file in a directory (sorted by name), or a single
/// file. Records without full text are dropped and reported; malformed
/// records and duplicate ids are fatal.
pub fn load_corpus(path: &Path, tokenizer: &Tokenizer) -> Result<(Corpus, LoadReport), CorpusError> {
    let files = record_files(path)?;
    if files.is_empty() {
        return Err(CorpusError::Empty(path.to_path_buf()));
    }
    let mut report = LoadReport::default();
    let mut articles = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| CorpusError::Io { path: f.clone(), source: e })?;
        let base = f.parent().unwrap_or(Path::new("."));
        let name = f.display().to_string();
        let lines: Vec<(usize, &str)> =
            text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty()).collect();
        report.records += lines.len();
        let parsed: Vec<Result<Parsed, CorpusError>> =
            lines.par_iter().map(|(n, l)| parse_record(l, &name, *n, base, tokenizer)).collect();
        for p in parsed {
            match p? {
                Parsed::Ok(a, removed) => {
                    report.references_removed += removed;
                    articles.push(a);
                }
                Parsed::Dropped(d) => report.dropped.push(d),
            }
        }
        report.files.push(name);
    }
    report.loaded = articles.len();
    Ok((Corpus::new(articles)?, report))
}

/// Parses JSON-lines text directly, e.g. a bundled asset.
pub fn parse_corpus(text: &str, tokenizer: &Tokenizer) -> Result<(Corpus, LoadReport), CorpusError> {
    let dir = std::env::temp_dir();
    let mut report = LoadReport { files: vec!["<inline>".into()], ..Default::default() };
    let mut articles = Vec::new();
    for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        report.records += 1;
        match parse_record(l, "<inline>", i + 1, &dir, tokenizer)? {
            Parsed::Ok(a, removed) => {
                report.references_removed += removed;
                articles.push(a);
            }
            Parsed::Dropped(d) => report.dropped.push(d),
        }
    }
    report.loaded = articles.len();
    Ok((Corpus::new(articles)?, report))
}

/// Writes the corpus as JSON lines with full text inlined.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io = |e| CorpusError::Io { path: path.to_path_buf(), source: e };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for a in corpus.articles() {
        serde_json::to_writer(&mut out, a).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// The bundled twelve-article synthetic corpus.
pub const MINI_CORPUS: &str = include_str!("../../assets/mini_corpus.jsonl");

pub fn mini_corpus(tokenizer: &Tokenizer) -> Corpus {
    parse_corpus(MINI_CORPUS, tokenizer).expect("bundled corpus is valid").0
}
