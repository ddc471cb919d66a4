//! Score breakdowns, factor correlations, failure diagnostics and dataset
//! statistics.

use std::collections::{BTreeMap, HashMap};

use lcqa_sql::ast::{BinaryOp, Expr};
use lcqa_sql::{Keyword, TokenKind};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::collection::{Collection, Level};
use crate::corpus::Subject;
use crate::eval::{infer_shape, is_format_violation, is_null_answer, is_partial_answer, EvalRecord};
use crate::template::{BenchmarkInstance, Skill, Split, Topic};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {need} paired values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
    #[error("correlation undefined: zero variance")]
    ZeroVariance,
}

/// Mean computed over the values in sorted order, so the result does not
/// depend on the order in which they arrive.
pub fn mean<T: Float>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let sum = v.iter().fold(T::zero(), |a, b| a + *b);
    Some(sum / T::from(v.len())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation<T> {
    pub r: T,
    pub p: T,
    pub n: usize,
}

/// Product-moment correlation with a two-sided t-test on n - 2 degrees of
/// freedom.
pub fn pearson<T: Float>(xs: &[T], ys: &[T]) -> Result<Correlation<T>, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Mismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    let nf = T::from(n).unwrap();
    let mx = xs.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let my = ys.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (*x - mx, *y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one());
    let df = n - 2;
    let p = if (T::one() - r.abs()) <= T::epsilon() {
        T::zero()
    } else {
        let rf = r.to_f64().unwrap();
        let t = rf * ((df as f64) / (1.0 - rf * rf)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
        T::from(2.0 * (1.0 - dist.cdf(t.abs()))).unwrap()
    };
    Ok(Correlation { r, p, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Skill,
    Topic,
    Subject,
    Level,
}

impl std::str::FromStr for GroupBy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "skill" => Ok(GroupBy::Skill),
            "topic" => Ok(GroupBy::Topic),
            "subject" => Ok(GroupBy::Subject),
            "level" => Ok(GroupBy::Level),
            o => Err(format!("unknown grouping `{o}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub count: usize,
    pub mean_em: Option<f64>,
    pub mean_f1: Option<f64>,
}

/// Pairs each record with its instance; unjoinable records are dropped with
/// a warning.
pub fn join<'a>(
    records: &'a [EvalRecord],
    instances: &'a [BenchmarkInstance],
) -> Vec<(&'a EvalRecord, &'a BenchmarkInstance)> {
    let by_id: HashMap<&str, &BenchmarkInstance> = instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
    records
        .iter()
        .filter_map(|r| match by_id.get(r.instance_id.as_str()) {
            Some(i) => Some((r, *i)),
            None => {
                log::warn!("evaluation record `{}` has no matching instance; skipped", r.instance_id);
                None
            }
        })
        .collect()
}

/// Mean EM and F1 per group. Every group of the dimension appears, with
/// count 0 and absent means when no scored record falls into it.
pub fn aggregate_scores(records: &[EvalRecord], instances: &[BenchmarkInstance], by: GroupBy) -> Vec<GroupRow> {
    let mut keys: Vec<String> = match by {
        GroupBy::Skill => Skill::ALL.iter().map(|s| s.to_string()).collect(),
        GroupBy::Topic => Topic::ALL.iter().map(|s| s.to_string()).collect(),
        GroupBy::Subject => Subject::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        GroupBy::Level => Vec::new(),
    };
    let mut levels: Vec<Level> = Vec::new();
    let mut buckets: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, i) in join(records, instances) {
        let key = match by {
            GroupBy::Skill => i.skill.to_string(),
            GroupBy::Topic => i.topic.to_string(),
            GroupBy::Subject => i.subject.as_str().to_string(),
            GroupBy::Level => {
                if !levels.contains(&i.level) {
                    levels.push(i.level);
                }
                i.level.to_string()
            }
        };
        if let (Some(em), Some(f1)) = (r.mean_em, r.mean_f1) {
            let b = buckets.entry(key).or_default();
            b.0.push(em);
            b.1.push(f1);
        }
    }
    if by == GroupBy::Level {
        levels.sort();
        keys = levels.iter().map(|l| l.to_string()).collect();
    }
    keys.into_iter()
        .map(|k| {
            let (em, f1) = buckets.remove(&k).unwrap_or_default();
            GroupRow { group: k, count: em.len(), mean_em: mean(&em), mean_f1: mean(&f1) }
        })
        .collect()
}

pub const NEGATION_LEXICON_VERSION: &str = "v1";
pub const NEGATION_WORDS: [&str; 5] = ["not", "never", "no", "without", "excluding"];

pub fn question_has_negation(q: &str) -> bool {
    let lower = q.to_lowercase();
    lower.contains("n't") || lower.split(|c: char| !c.is_alphanumeric()).any(|w| NEGATION_WORDS.contains(&w))
}

pub fn sql_has_negation(sql: &str) -> bool {
    let Ok(q) = lcqa_sql::parse(sql) else {
        let up = sql.to_ascii_uppercase();
        return up.contains(" NOT ") || up.contains("<>") || up.contains("!=");
    };
    let mut found = false;
    for s in q.selects() {
        s.visit_exprs(&mut |e| {
            found |= matches!(
                e,
                Expr::Not(_)
                    | Expr::Binary { op: BinaryOp::NotEq, .. }
                    | Expr::Like { negated: true, .. }
                    | Expr::Between { negated: true, .. }
                    | Expr::InList { negated: true, .. }
                    | Expr::InSubquery { negated: true, .. }
            )
        });
    }
    found
}

pub fn negation_subset(instances: &[BenchmarkInstance]) -> Vec<&BenchmarkInstance> {
    instances.iter().filter(|i| question_has_negation(&i.question) || sql_has_negation(&i.sql)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub skill: Skill,
    pub samples: usize,
    pub null_rate: Option<f64>,
    pub format_violation_rate: Option<f64>,
    pub partial_answer_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegationRow {
    pub skill: Skill,
    pub instances: usize,
    pub mean_em: Option<f64>,
    pub mean_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    /// Format violations come from a SELECT-clause heuristic.
    pub note: String,
    pub per_skill: Vec<FailureRow>,
    pub negation: Vec<NegationRow>,
}

fn rate(flags: &[bool]) -> Option<f64> {
    if flags.is_empty() {
        None
    } else {
        Some(flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
    }
}

/// Null, format-violation and partial-answer flags.
type FlagColumns = (Vec<bool>, Vec<bool>, Vec<bool>);

/// Per-sample flag rates by skill, recomputed from each (record, instance)
/// pair, plus scores on the negation subset.
pub fn failure_patterns(records: &[EvalRecord], instances: &[BenchmarkInstance]) -> FailureReport {
    let mut flags: BTreeMap<Skill, FlagColumns> = BTreeMap::new();
    let mut neg: BTreeMap<Skill, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, i) in join(records, instances) {
        let shape = infer_shape(&i.sql);
        let f = flags.entry(i.skill).or_default();
        for s in &r.samples {
            f.0.push(is_null_answer(s, &i.gold_answer));
            f.1.push(is_format_violation(s, shape));
            f.2.push(is_partial_answer(s, &i.gold_answer));
        }
        if question_has_negation(&i.question) || sql_has_negation(&i.sql) {
            if let (Some(em), Some(f1)) = (r.mean_em, r.mean_f1) {
                let n = neg.entry(i.skill).or_default();
                n.0.push(em);
                n.1.push(f1);
            }
        }
    }
    FailureReport {
        note: "format violations are inferred heuristically from the SELECT clause".into(),
        per_skill: Skill::ALL
            .iter()
            .map(|s| {
                let (a, b, c) = flags.remove(s).unwrap_or_default();
                FailureRow {
                    skill: *s,
                    samples: a.len(),
                    null_rate: rate(&a),
                    format_violation_rate: rate(&b),
                    partial_answer_rate: rate(&c),
                }
            })
            .collect(),
        negation: Skill::ALL
            .iter()
            .map(|s| {
                let (em, f1) = neg.remove(s).unwrap_or_default();
                NegationRow { skill: *s, instances: em.len(), mean_em: mean(&em), mean_f1: mean(&f1) }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorVector {
    pub instance_id: String,
    pub n_articles: usize,
    pub len_q: usize,
    pub len_sql: usize,
    pub len_a: usize,
}

pub fn factor_vector(i: &BenchmarkInstance, n_articles: usize) -> FactorVector {
    FactorVector {
        instance_id: i.instance_id.clone(),
        n_articles,
        len_q: i.question.split_whitespace().count(),
        len_sql: i.sql.chars().count(),
        len_a: i.gold_answer.split_whitespace().count(),
    }
}

pub const FACTOR_NAMES: [&str; 5] = ["n_articles", "len_q", "len_sql", "len_a", "em"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub x: String,
    pub y: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
}

/// Pairwise correlations among the factors and mean EM.
pub fn factor_correlations(
    records: &[EvalRecord],
    instances: &[BenchmarkInstance],
    collections: &[Collection],
) -> Vec<CorrelationCell> {
    let sizes: HashMap<&str, usize> =
        collections.iter().map(|c| (c.collection_id.as_str(), c.article_ids.len())).collect();
    let mut cols: [Vec<f64>; 5] = Default::default();
    for (r, i) in join(records, instances) {
        let (Some(em), Some(n)) = (r.mean_em, sizes.get(i.collection_id.as_str())) else { continue };
        let f = factor_vector(i, *n);
        for (c, v) in cols.iter_mut().zip([f.n_articles as f64, f.len_q as f64, f.len_sql as f64, f.len_a as f64, em]) {
            c.push(v);
        }
    }
    let mut out = Vec::new();
    for a in 0..5 {
        for b in 0..5 {
            let c = pearson(&cols[a], &cols[b]).ok();
            out.push(CorrelationCell {
                x: FACTOR_NAMES[a].into(),
                y: FACTOR_NAMES[b].into(),
                r: c.map(|c| c.r),
                p: c.map(|c| c.p),
                n: cols[a].len(),
            });
        }
    }
    out
}

/// Commands and operators in reporting order.
pub const COMMAND_ORDER: [&str; 29] = [
    "SELECT", "WHERE", "=", "IN", "OR", "ORDER BY", "<", ">", "COUNT", "ASC", "DESC", "DISTINCT", "*", "MAX", "AND",
    "GROUP BY", "<=", "%", ">=", "NOT", "<>", "AVG", "MIN", "BETWEEN", "SUM", "/", "LIKE", "+", "-",
];

/// Command/operator labels occurring in one query.
pub fn commands_in(sql: &str) -> Vec<&'static str> {
    let Ok(tokens) = lcqa_sql::tokenize(sql) else { return Vec::new() };
    let mut found = Vec::new();
    let mut prev: Option<&TokenKind> = None;
    for t in &tokens {
        let label: Option<&'static str> = match &t.kind {
            TokenKind::Keyword(k) => match k {
                Keyword::Select => Some("SELECT"),
                Keyword::Where => Some("WHERE"),
                Keyword::In => Some("IN"),
                Keyword::Or => Some("OR"),
                Keyword::And => Some("AND"),
                Keyword::Not => Some("NOT"),
                Keyword::Asc => Some("ASC"),
                Keyword::Desc => Some("DESC"),
                Keyword::Distinct => Some("DISTINCT"),
                Keyword::Between => Some("BETWEEN"),
                Keyword::Like => Some("LIKE"),
                Keyword::By => match prev {
                    Some(TokenKind::Keyword(Keyword::Order)) => Some("ORDER BY"),
                    Some(TokenKind::Keyword(Keyword::Group)) => Some("GROUP BY"),
                    _ => None,
                },
                _ => None,
            },
            TokenKind::Ident(name) => match name.to_ascii_uppercase().as_str() {
                "COUNT" => Some("COUNT"),
                "MAX" => Some("MAX"),
                "MIN" => Some("MIN"),
                "AVG" => Some("AVG"),
                "SUM" => Some("SUM"),
                _ => None,
            },
            TokenKind::Eq => Some("="),
            TokenKind::Lt => Some("<"),
            TokenKind::Gt => Some(">"),
            TokenKind::LtEq => Some("<="),
            TokenKind::GtEq => Some(">="),
            TokenKind::NotEq => Some("<>"),
            TokenKind::Star => Some("*"),
            TokenKind::Percent => Some("%"),
            TokenKind::Slash => Some("/"),
            TokenKind::Plus => Some("+"),
            TokenKind::Minus => Some("-"),
            _ => None,
        };
        if let Some(l) = label {
            if !found.contains(&l) {
                found.push(l);
            }
        }
        prev = Some(&t.kind);
    }
    found
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub command: String,
    pub instances: usize,
    pub proportion: f64,
}

/// Number of instances using each command or operator at least once.
pub fn command_distribution(instances: &[BenchmarkInstance]) -> Vec<DistributionRow> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for i in instances {
        for c in commands_in(&i.sql) {
            *counts.entry(c).or_default() += 1;
        }
    }
    let n = instances.len();
    COMMAND_ORDER
        .iter()
        .map(|c| {
            let k = counts.get(c).copied().unwrap_or(0);
            DistributionRow {
                command: c.to_string(),
                instances: k,
                proportion: if n == 0 { 0.0 } else { k as f64 / n as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: Level,
    pub collections: usize,
    pub mean_articles: Option<f64>,
    pub min_tokens: Option<u64>,
    pub max_tokens: Option<u64>,
    pub mean_tokens: Option<f64>,
    pub train_instances: usize,
    pub test_instances: usize,
}

pub fn dataset_stats(collections: &[Collection], instances: &[BenchmarkInstance]) -> Vec<LevelStats> {
    let mut levels: Vec<Level> = collections.iter().map(|c| c.level).collect();
    levels.sort();
    levels.dedup();
    levels
        .into_iter()
        .map(|l| {
            let cs: Vec<&Collection> = collections.iter().filter(|c| c.level == l).collect();
            let arts: Vec<f64> = cs.iter().map(|c| c.article_ids.len() as f64).collect();
            let toks: Vec<f64> = cs.iter().map(|c| c.total_tokens as f64).collect();
            let count = |s: Split| instances.iter().filter(|i| i.level == l && i.split == s).count();
            LevelStats {
                level: l,
                collections: cs.len(),
                mean_articles: mean(&arts),
                min_tokens: cs.iter().map(|c| c.total_tokens).min(),
                max_tokens: cs.iter().map(|c| c.total_tokens).max(),
                mean_tokens: mean(&toks),
                train_instances: count(Split::Train),
                test_instances: count(Split::Test),
            }
        })
        .collect()
}

/// Series for external plotting: one breakdown per grouping and the factor
/// correlation matrix.
pub fn plot_data(
    records: &[EvalRecord],
    instances: &[BenchmarkInstance],
    collections: &[Collection],
) -> serde_json::Value {
    let groups = |g| serde_json::to_value(aggregate_scores(records, instances, g)).expect("serializable");
    serde_json::json!({
        "breakdowns": {
            "skill": groups(GroupBy::Skill),
            "topic": groups(GroupBy::Topic),
            "subject": groups(GroupBy::Subject),
            "level": groups(GroupBy::Level),
        },
        "factor_correlations": factor_correlations(records, instances, collections),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_small_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().r - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r + 1.0).abs() < 1e-12);
        let c = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((c.r - 0.5).abs() < 1e-12);
        // t = 0.5 * sqrt(1/0.75) on one degree of freedom: p = 1 - 2 atan(t)/pi.
        let t: f64 = 0.5 / 0.75f64.sqrt();
        let p = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        assert!((c.p - p).abs() < 1e-9);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
        assert!(matches!(pearson(&[1.0f32, 2.0], &[1.0, 2.0]), Err(StatsError::TooFew { .. })));
        assert!((pearson(&[1.0f32, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap().r - 0.5).abs() < 1e-6);
    }

    #[test]
    fn negation_markers() {
        assert!(question_has_negation(
            "How many articles are cited inside the collection yet never cite another member?"
        ));
        assert!(!question_has_negation("What is the largest author count of any article?"));
        assert!(!question_has_negation("Which titles mention economics?"));
        assert!(sql_has_negation("SELECT article_title FROM articles WHERE author_count <> 3"));
        assert!(sql_has_negation(
            "SELECT article_title FROM articles WHERE article_id NOT IN (SELECT article_id_cited FROM citing_cited)"
        ));
        assert!(!sql_has_negation("SELECT MAX(author_count) FROM articles"));
    }

    #[test]
    fn command_labels() {
        let c = commands_in(
            "SELECT author_name FROM article_author WHERE author_position < 2 ORDER BY author_position DESC",
        );
        assert_eq!(c, vec!["SELECT", "WHERE", "<", "ORDER BY", "DESC"]);
        let c = commands_in("SELECT COUNT(*) FROM articles GROUP BY author_count");
        assert_eq!(c, vec!["SELECT", "COUNT", "*", "GROUP BY"]);
    }
}
