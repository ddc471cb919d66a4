//! Evaluation prompts, sampling, exact match and token F1.

use std::collections::HashMap;

use lcqa_sql::ast::{AggFunc, Expr, SelectItem};
use lcqa_sql::parse_decimal;
use serde::{Deserialize, Serialize};

use crate::collection::{ContextDocument, Level};
use crate::corpus::Tokenizer;
use crate::error::LlmError;
use crate::llm::{ChatModel, EndpointConfig};
use crate::metadata::MetadataDatabase;
use crate::prompts;
use crate::template::{Skill, Topic};

pub const NORMALIZATION_VERSION: &str = "v1";
pub const DEFAULT_SAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    FullText,
    DbTables,
}

impl ContextMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::FullText => "full_text",
            ContextMode::DbTables => "db_tables",
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full_text" => Ok(ContextMode::FullText),
            "db_tables" => Ok(ContextMode::DbTables),
            other => Err(format!("unknown context mode `{other}` (expected full_text or db_tables)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("context is empty")]
    EmptyContext,
}

pub fn render_prompt_fulltext(doc: &ContextDocument, question: &str) -> Result<String, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if doc.text.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    Ok(prompts::eval_fulltext(&doc.text, question))
}

pub fn render_prompt_tables(db: &MetadataDatabase, question: &str) -> Result<String, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    Ok(prompts::eval_tables(&db.to_csv("articles"), &db.to_csv("article_author"), &db.to_csv("citing_cited"), question))
}

/// `n` independent samples, verbatim.
pub fn query_model(
    model: &dyn ChatModel,
    ep: &EndpointConfig,
    prompt: &str,
    n: usize,
) -> Result<Vec<String>, LlmError> {
    assert!(n >= 1, "at least one sample is required");
    let req = ep.request(prompt);
    (0..n).map(|_| model.complete(&req)).collect()
}

fn canonical_number(s: &str) -> Option<String> {
    let r = parse_decimal(s)?;
    Some(if r.is_integer() { r.to_integer().to_string() } else { format!("{}/{}", r.numer(), r.denom()) })
}

/// Normalization profile v1: trim, lowercase, collapse whitespace, tighten
/// comma separators to ", ", drop one trailing period, and rewrite numeric
/// items by value.
pub fn normalize(s: &str) -> String {
    let lowered = s.trim().to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut joined = collapsed.split(',').map(str::trim).collect::<Vec<_>>().join(", ").trim().to_string();
    if joined.ends_with('.') {
        joined.pop();
        joined = joined.trim_end().to_string();
    }
    if joined.is_empty() {
        return joined;
    }
    joined
        .split(", ")
        .map(|item| canonical_number(item).unwrap_or_else(|| item.to_string()))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize(pred) == normalize(gold))
}

fn tokens(s: &str) -> Vec<String> {
    normalize(s)
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| canonical_number(t).unwrap_or_else(|| t.to_string()))
        .collect()
}

fn bag(items: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in items {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Bag-of-tokens F1 over whitespace and comma tokens.
pub fn f1_score(pred: &str, gold: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let gb = bag(&g);
    let common: usize = bag(&p).iter().map(|(t, c)| (*c).min(gb.get(t).copied().unwrap_or(0))).sum();
    2.0 * common as f64 / (p.len() + g.len()) as f64
}

/// Comma-separated items of the normalized answer.
pub fn answer_items(s: &str) -> Vec<String> {
    let n = normalize(s);
    if n.is_empty() {
        Vec::new()
    } else {
        n.split(", ").map(str::to_string).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Number,
    Name,
    Title,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerShape {
    pub kind: ValueKind,
    /// Exactly one value expected.
    pub scalar: bool,
}

fn expr_kind(e: &Expr) -> ValueKind {
    match e {
        Expr::Aggregate { func: AggFunc::Count | AggFunc::Sum | AggFunc::Avg, .. } => ValueKind::Number,
        Expr::Aggregate { arg: Some(a), .. } => expr_kind(a),
        Expr::Column { name, .. } => match name.as_str() {
            "author_name" => ValueKind::Name,
            "article_title" => ValueKind::Title,
            n if n.ends_with("_count") || n == "author_position" => ValueKind::Number,
            _ => ValueKind::Mixed,
        },
        Expr::Literal(v) if v.to_string().parse::<f64>().is_ok() => ValueKind::Number,
        Expr::Binary { .. } | Expr::Unary { .. } => ValueKind::Number,
        _ => ValueKind::Mixed,
    }
}

/// Expected answer shape read off the SELECT clause of the generating SQL.
pub fn infer_shape(sql: &str) -> Option<AnswerShape> {
    let q = lcqa_sql::parse(sql).ok()?;
    let kinds: Vec<ValueKind> = q
        .items
        .iter()
        .map(|i| match i {
            SelectItem::Expr { expr, .. } => expr_kind(expr),
            SelectItem::Wildcard => ValueKind::Mixed,
        })
        .collect();
    let kind = if kinds.windows(2).all(|w| w[0] == w[1]) { kinds[0] } else { ValueKind::Mixed };
    Some(AnswerShape { kind, scalar: q.is_scalar_aggregate() && q.items.len() == 1 })
}

fn is_numeric_item(s: &str) -> bool {
    canonical_number(s).is_some()
}

pub fn is_null_answer(sample: &str, gold: &str) -> bool {
    normalize(sample) == "null" && normalize(gold) != "null"
}

/// Heuristic: numbers where names or titles were asked for (or the reverse),
/// or several values where one was asked for.
pub fn is_format_violation(sample: &str, shape: Option<AnswerShape>) -> bool {
    let Some(shape) = shape else { return false };
    let items = answer_items(sample);
    if items.is_empty() || normalize(sample) == "null" {
        return false;
    }
    if shape.scalar && items.len() > 1 {
        return true;
    }
    match shape.kind {
        ValueKind::Number => items.iter().any(|i| !is_numeric_item(i)),
        ValueKind::Name | ValueKind::Title => items.iter().all(|i| is_numeric_item(i)),
        ValueKind::Mixed => false,
    }
}

/// Prediction items form a proper, non-empty sub-bag of a multi-item gold.
pub fn is_partial_answer(sample: &str, gold: &str) -> bool {
    let g = answer_items(gold);
    let p = answer_items(sample);
    if g.len() < 2 || p.is_empty() || p.len() >= g.len() {
        return false;
    }
    let mut gb = bag(&g);
    for t in &p {
        match gb.get_mut(t.as_str()) {
            Some(c) if *c > 0 => *c -= 1,
            _ => return false,
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: String,
    pub model: String,
    pub context_mode: ContextMode,
    pub level: Level,
    pub skill: Skill,
    pub topic: Topic,
    pub normalization: String,
    pub prompt_tokens: u64,
    /// Set when the prompt did not fit the endpoint's context window; no
    /// samples or scores are recorded then.
    pub unanswerable: bool,
    pub samples: Vec<String>,
    pub em_per_sample: Vec<u8>,
    pub f1_per_sample: Vec<f64>,
    pub mean_em: Option<f64>,
    pub mean_f1: Option<f64>,
    pub null_answer: Vec<bool>,
    pub format_violation: Vec<bool>,
    pub partial_answer: Vec<bool>,
}

/// What an evaluation job needs to know about the instance.
#[derive(Debug, Clone)]
pub struct EvalTarget<'a> {
    pub instance_id: &'a str,
    pub level: Level,
    pub skill: Skill,
    pub topic: Topic,
    pub sql: &'a str,
    pub gold: &'a str,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn score_record(
    t: &EvalTarget<'_>,
    model: &str,
    mode: ContextMode,
    prompt_tokens: u64,
    samples: Vec<String>,
) -> EvalRecord {
    let shape = infer_shape(t.sql);
    let em: Vec<u8> = samples.iter().map(|s| exact_match(s, t.gold)).collect();
    let f1: Vec<f64> = samples.iter().map(|s| f1_score(s, t.gold)).collect();
    EvalRecord {
        instance_id: t.instance_id.to_string(),
        model: model.to_string(),
        context_mode: mode,
        level: t.level,
        skill: t.skill,
        topic: t.topic,
        normalization: NORMALIZATION_VERSION.into(),
        prompt_tokens,
        unanswerable: false,
        mean_em: mean(em.iter().map(|e| *e as f64)),
        mean_f1: mean(f1.iter().copied()),
        null_answer: samples.iter().map(|s| is_null_answer(s, t.gold)).collect(),
        format_violation: samples.iter().map(|s| is_format_violation(s, shape)).collect(),
        partial_answer: samples.iter().map(|s| is_partial_answer(s, t.gold)).collect(),
        em_per_sample: em,
        f1_per_sample: f1,
        samples,
    }
}

fn unanswerable(t: &EvalTarget<'_>, model: &str, mode: ContextMode, prompt_tokens: u64) -> EvalRecord {
    let mut r = score_record(t, model, mode, prompt_tokens, Vec::new());
    r.unanswerable = true;
    r
}

/// Samples and scores one prompt. Prompts longer than the advertised
/// context window, or rejected by the endpoint as too long, give an
/// unanswerable record instead of being truncated.
pub fn evaluate_prompt(
    t: &EvalTarget<'_>,
    prompt: &str,
    mode: ContextMode,
    model: &dyn ChatModel,
    ep: &EndpointConfig,
    samples: usize,
    tokenizer: &Tokenizer,
) -> Result<EvalRecord, LlmError> {
    let n_tokens = tokenizer.count(prompt);
    if ep.context_window.is_some_and(|w| n_tokens > w) {
        return Ok(unanswerable(t, model.name(), mode, n_tokens));
    }
    match query_model(model, ep, prompt, samples) {
        Ok(s) => Ok(score_record(t, model.name(), mode, n_tokens, s)),
        Err(LlmError::ContextLength) => Ok(unanswerable(t, model.name(), mode, n_tokens)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize("  A.  Vaswani ,N. Shazeer. "), "a. vaswani, n. shazeer");
        assert_eq!(normalize("10.0"), "10");
        assert_eq!(normalize("2.50, 3"), "5/2, 3");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn shape_inference() {
        assert_eq!(
            infer_shape("SELECT COUNT(*) FROM articles"),
            Some(AnswerShape { kind: ValueKind::Number, scalar: true })
        );
        assert_eq!(
            infer_shape("SELECT author_name FROM article_author"),
            Some(AnswerShape { kind: ValueKind::Name, scalar: false })
        );
        assert_eq!(infer_shape("SELECT MAX(article_title) FROM articles").unwrap().kind, ValueKind::Title);
        assert_eq!(
            infer_shape("SELECT author_count, COUNT(*) FROM articles GROUP BY author_count"),
            Some(AnswerShape { kind: ValueKind::Number, scalar: false })
        );
    }

    #[test]
    fn flag_rules() {
        let count = infer_shape("SELECT COUNT(*) FROM articles");
        assert!(is_format_violation("P. Smith, Q. Jones", count));
        assert!(!is_format_violation("3", count));
        assert!(!is_format_violation("NULL", count));
        let names = infer_shape("SELECT author_name FROM article_author");
        assert!(is_format_violation("1, 2", names));
        assert!(is_partial_answer("9, 17", "9, 17, 5"));
        assert!(!is_partial_answer("9, 17, 5", "9, 17, 5"));
        assert!(!is_partial_answer("9, 4", "9, 17, 5"));
        assert!(!is_partial_answer("9", "9"));
        assert!(is_null_answer("null", "16"));
        assert!(!is_null_answer("NULL", "NULL"));
    }
}
