//! SQL template library, instantiation against a metadata database, ground
//! truth execution and answer serialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lcqa_sql::ast::{Expr, Select};
use lcqa_sql::{ResultTable, SqlError, Value};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::collection::Level;
use crate::corpus::Subject;
use crate::error::TemplateError;
use crate::metadata::MetadataDatabase;
use crate::seed::Rng;

pub const BUNDLED_LIBRARY: &str = include_str!("../assets/templates.json");
pub const DEFAULT_TEMPLATES_PER_COLLECTION: usize = 10;
pub const MAX_REDRAWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Skill {
    Aggregating,
    Sorting,
    Filtering,
    #[serde(rename = "Filtering+Aggregating")]
    FilteringAggregating,
    #[serde(rename = "Filtering+Sorting")]
    FilteringSorting,
    RelationalFiltering,
}

impl Skill {
    pub const ALL: [Skill; 6] = [
        Skill::Aggregating,
        Skill::Sorting,
        Skill::Filtering,
        Skill::FilteringAggregating,
        Skill::FilteringSorting,
        Skill::RelationalFiltering,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Skill::Aggregating => "Aggregating",
            Skill::Sorting => "Sorting",
            Skill::Filtering => "Filtering",
            Skill::FilteringAggregating => "Filtering+Aggregating",
            Skill::FilteringSorting => "Filtering+Sorting",
            Skill::RelationalFiltering => "RelationalFiltering",
        }
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Skill {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Skill::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown skill `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    AuthorCount,
    AuthorList,
    ReferenceCount,
    TitleList,
    TitleWordCount,
    AuthorRelation,
    CitationRelation,
}

impl Topic {
    pub const ALL: [Topic; 7] = [
        Topic::AuthorCount,
        Topic::AuthorList,
        Topic::ReferenceCount,
        Topic::TitleList,
        Topic::TitleWordCount,
        Topic::AuthorRelation,
        Topic::CitationRelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::AuthorCount => "AuthorCount",
            Topic::AuthorList => "AuthorList",
            Topic::ReferenceCount => "ReferenceCount",
            Topic::TitleList => "TitleList",
            Topic::TitleWordCount => "TitleWordCount",
            Topic::AuthorRelation => "AuthorRelation",
            Topic::CitationRelation => "CitationRelation",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Topic::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown topic `{s}`"))
    }
}

/// How a placeholder is bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PlaceholderRule {
    /// A value present in `table.column`.
    ColumnValue {
        table: String,
        column: String,
    },
    /// A value present in `table.column` that is at least the value bound to
    /// placeholder `lower`.
    ColumnValueAtLeast {
        table: String,
        column: String,
        lower: String,
    },
    /// An integer in 0..=max(author_position).
    AuthorPosition,
    /// A word from some article title, bound as a `'%word%'` pattern.
    TitleWord,
    AuthorName,
    ArticleTitle,
    IntRange {
        min: i64,
        max: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub template_id: String,
    pub skill: Skill,
    pub topic: Topic,
    pub sql_text: String,
    #[serde(default)]
    pub placeholder_specs: BTreeMap<String, PlaceholderRule>,
}

/// Placeholder names in order of first appearance.
pub fn placeholders(sql: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = sql;
    while let Some(i) = rest.find('{') {
        let after = &rest[i + 1..];
        let Some(j) = after.find('}') else { break };
        let name = &after[..j];
        if !name.is_empty() && !out.iter().any(|n| n == name) {
            out.push(name.to_string());
        }
        rest = &after[j + 1..];
    }
    out
}

/// Single-pass substitution: replaced text is never scanned again, and
/// unknown `{names}` are left as they are.
pub fn substitute(text: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        match after.find('}').and_then(|j| bindings.get(&after[..j]).map(|v| (j, v))) {
            Some((j, v)) => {
                out.push_str(v);
                rest = &after[j + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

const SCHEMA: [(&str, &[&str]); 3] = [
    ("articles", &["article_id", "article_title", "title_word_count", "author_count", "reference_count"]),
    ("article_author", &["relation_id", "article_id", "author_name", "author_position"]),
    ("citing_cited", &["relation_id", "article_id_citing", "article_id_cited"]),
];

fn schema_columns(table: &str) -> Option<&'static [&'static str]> {
    SCHEMA.iter().find(|(t, _)| *t == table).map(|(_, c)| *c)
}

/// Literal used to make a template parseable for static checks.
fn dummy_literal(rule: &PlaceholderRule) -> String {
    match rule {
        PlaceholderRule::ColumnValue { column, .. } | PlaceholderRule::ColumnValueAtLeast { column, .. }
            if column.ends_with("count") || column.ends_with("position") =>
        {
            "1".into()
        }
        PlaceholderRule::AuthorPosition | PlaceholderRule::IntRange { .. } => "1".into(),
        _ => "'x'".into(),
    }
}

impl QueryTemplate {
    pub fn placeholders(&self) -> Vec<String> {
        placeholders(&self.sql_text)
    }

    /// Structural checks: specs match placeholders one to one, spec tables
    /// and columns exist, and the SQL parses and only touches the schema.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let invalid = |m: String| TemplateError::Invalid { id: self.template_id.clone(), message: m };
        let used: BTreeSet<String> = self.placeholders().into_iter().collect();
        let specified: BTreeSet<String> = self.placeholder_specs.keys().cloned().collect();
        if let Some(p) = used.difference(&specified).next() {
            return Err(invalid(format!("placeholder `{{{p}}}` has no spec")));
        }
        if let Some(p) = specified.difference(&used).next() {
            return Err(invalid(format!("spec `{p}` is not used in the SQL")));
        }
        for (name, rule) in &self.placeholder_specs {
            match rule {
                PlaceholderRule::ColumnValue { table, column }
                | PlaceholderRule::ColumnValueAtLeast { table, column, .. } => {
                    if !schema_columns(table).is_some_and(|c| c.contains(&column.as_str())) {
                        return Err(invalid(format!("spec `{name}` names unknown column {table}.{column}")));
                    }
                }
                PlaceholderRule::IntRange { min, max } if min > max => {
                    return Err(invalid(format!("spec `{name}` has an empty range")));
                }
                _ => {}
            }
            if let PlaceholderRule::ColumnValueAtLeast { lower, .. } = rule {
                match self.placeholder_specs.get(lower) {
                    Some(PlaceholderRule::ColumnValue { .. }) => {}
                    _ => return Err(invalid(format!("spec `{name}` needs `{lower}` bound by column_value"))),
                }
            }
        }
        let dummy: BTreeMap<String, String> =
            self.placeholder_specs.iter().map(|(k, r)| (k.clone(), dummy_literal(r))).collect();
        let sql = substitute(&self.sql_text, &dummy);
        let parsed = lcqa_sql::parse(&sql).map_err(|e| invalid(e.to_string()))?;
        check_schema(&parsed).map_err(invalid)
    }

    pub fn parsed_shape(&self) -> Result<Select, TemplateError> {
        let dummy: BTreeMap<String, String> =
            self.placeholder_specs.iter().map(|(k, r)| (k.clone(), dummy_literal(r))).collect();
        lcqa_sql::parse(&substitute(&self.sql_text, &dummy))
            .map_err(|e| TemplateError::Invalid { id: self.template_id.clone(), message: e.to_string() })
    }
}

fn check_schema(q: &Select) -> Result<(), String> {
    for s in q.selects() {
        let cols = schema_columns(&s.from.name).ok_or_else(|| format!("unknown table `{}`", s.from.name))?;
        let mut bad = None;
        let mut check = |e: &Expr| {
            if let Expr::Column { name, .. } = e {
                if !cols.contains(&name.as_str()) && bad.is_none() {
                    bad = Some(name.clone());
                }
            }
        };
        for item in &s.items {
            if let lcqa_sql::ast::SelectItem::Expr { expr, .. } = item {
                expr.walk(&mut check);
            }
        }
        for e in s.filter.iter().chain(&s.group_by).chain(s.order_by.iter().map(|o| &o.expr)) {
            e.walk(&mut check);
        }
        if let Some(b) = bad {
            return Err(format!("column `{b}` is not in table `{}`", s.from.name));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TemplateLibrary {
    templates: Vec<QueryTemplate>,
}

impl TemplateLibrary {
    pub fn new(templates: Vec<QueryTemplate>) -> Result<Self, TemplateError> {
        let mut ids = BTreeSet::new();
        for t in &templates {
            if !ids.insert(t.template_id.as_str()) {
                return Err(TemplateError::Invalid {
                    id: t.template_id.clone(),
                    message: "duplicate template_id".into(),
                });
            }
            t.validate()?;
        }
        Ok(TemplateLibrary { templates })
    }

    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let templates: Vec<QueryTemplate> =
            serde_json::from_str(text).map_err(|e| TemplateError::Load(e.to_string()))?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TemplateError::Load(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_LIBRARY).expect("bundled template library is valid")
    }

    pub fn templates(&self) -> &[QueryTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QueryTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    pub fn skill_counts(&self) -> BTreeMap<Skill, usize> {
        let mut m: BTreeMap<Skill, usize> = Skill::ALL.iter().map(|s| (*s, 0)).collect();
        for t in &self.templates {
            *m.entry(t.skill).or_default() += 1;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Uniform without replacement over the whole library.
    #[default]
    Uniform,
    /// Skills taken round robin, uniform within a skill.
    Stratified,
}

pub fn select_templates<'a>(
    library: &'a TemplateLibrary,
    n: usize,
    mode: SelectionMode,
    rng: &mut Rng,
) -> Result<Vec<&'a QueryTemplate>, TemplateError> {
    if n > library.len() {
        return Err(TemplateError::TooMany { requested: n, available: library.len() });
    }
    match mode {
        SelectionMode::Uniform => {
            Ok(sample(rng, library.len(), n).into_iter().map(|i| &library.templates[i]).collect())
        }
        SelectionMode::Stratified => {
            let mut pools: Vec<Vec<&QueryTemplate>> = Skill::ALL
                .iter()
                .map(|s| library.templates.iter().filter(|t| t.skill == *s).collect::<Vec<_>>())
                .filter(|p| !p.is_empty())
                .collect();
            let mut out = Vec::with_capacity(n);
            let mut k = 0;
            while out.len() < n {
                let np = pools.len();
                let p = &mut pools[k % np];
                if !p.is_empty() {
                    let i = rng.gen_range(0..p.len());
                    out.push(p.swap_remove(i));
                }
                k += 1;
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstantiatedQuery {
    pub template_id: String,
    pub collection_id: String,
    pub skill: Skill,
    pub topic: Topic,
    pub sql: String,
    /// Placeholder name to the SQL literal substituted for it.
    pub bindings: BTreeMap<String, String>,
    /// Number of draws used, 1 when the first binding was kept.
    pub draws: usize,
}

pub fn sql_literal(v: &Value) -> String {
    match v {
        Value::Text(s) => format!("'{}'", s.replace('\'', "''")),
        other => other.to_string(),
    }
}

fn column_values(db: &MetadataDatabase, table: &str, column: &str) -> Vec<Value> {
    let Some(t) = db.engine().table(table) else { return Vec::new() };
    let Some(i) = t.column_index(column) else { return Vec::new() };
    let mut vals: Vec<Value> = t.rows().iter().map(|r| r[i].clone()).filter(|v| !v.is_null()).collect();
    vals.sort_by(|a, b| a.sort_cmp(b));
    vals.dedup();
    vals
}

fn title_words(db: &MetadataDatabase) -> Vec<String> {
    let words: BTreeSet<String> = db
        .articles
        .iter()
        .flat_map(|a| {
            a.article_title.split(|c: char| !c.is_ascii_alphanumeric()).map(str::to_ascii_lowercase).collect::<Vec<_>>()
        })
        .filter(|w| w.len() >= 3)
        .collect();
    words.into_iter().collect()
}

fn pick<T: Clone>(pool: &[T], rng: &mut Rng) -> Option<T> {
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.gen_range(0..pool.len())].clone())
    }
}

/// Draws one binding per placeholder. Returns `None` when some rule has no
/// candidate values in this database.
fn draw_bindings(t: &QueryTemplate, db: &MetadataDatabase, rng: &mut Rng) -> Option<BTreeMap<String, String>> {
    let mut raw: BTreeMap<String, Value> = BTreeMap::new();
    let mut out = BTreeMap::new();
    // Independent rules first so that lower bounds are known.
    let mut order: Vec<(&String, &PlaceholderRule)> = t.placeholder_specs.iter().collect();
    order.sort_by_key(|(_, r)| matches!(r, PlaceholderRule::ColumnValueAtLeast { .. }));
    for (name, rule) in order {
        let v = match rule {
            PlaceholderRule::ColumnValue { table, column } => pick(&column_values(db, table, column), rng)?,
            PlaceholderRule::ColumnValueAtLeast { table, column, lower } => {
                let lo = raw.get(lower)?;
                let pool: Vec<Value> =
                    column_values(db, table, column).into_iter().filter(|v| v.sort_cmp(lo).is_ge()).collect();
                pick(&pool, rng)?
            }
            PlaceholderRule::AuthorPosition => {
                let max = db.article_author.iter().map(|r| r.author_position).max()?;
                Value::Int(rng.gen_range(0..=max))
            }
            PlaceholderRule::TitleWord => Value::Text(format!("%{}%", pick(&title_words(db), rng)?)),
            PlaceholderRule::AuthorName => pick(&column_values(db, "article_author", "author_name"), rng)?,
            PlaceholderRule::ArticleTitle => pick(&column_values(db, "articles", "article_title"), rng)?,
            PlaceholderRule::IntRange { min, max } => Value::Int(rng.gen_range(*min..=*max)),
        };
        out.insert(name.clone(), sql_literal(&v));
        raw.insert(name.clone(), v);
    }
    Some(out)
}

/// Binds every placeholder from values realized in `db`. Row-returning
/// queries that come back empty are redrawn up to [`MAX_REDRAWS`] times;
/// scalar aggregates are kept as drawn.
pub fn instantiate(
    t: &QueryTemplate,
    db: &MetadataDatabase,
    rng: &mut Rng,
) -> Result<InstantiatedQuery, TemplateError> {
    let reject = |reason: String| TemplateError::Rejected { id: t.template_id.clone(), reason };
    let scalar = t.parsed_shape()?.is_scalar_aggregate();
    let max_draws = if t.placeholder_specs.is_empty() { 1 } else { 1 + MAX_REDRAWS };
    for draw in 1..=max_draws {
        let Some(bindings) = draw_bindings(t, db, rng) else {
            return Err(reject("no candidate values for a placeholder".into()));
        };
        let sql = substitute(&t.sql_text, &bindings);
        let result = execute_query(db, &sql).map_err(|e| reject(e.to_string()))?;
        if scalar || !result.is_empty() {
            return Ok(InstantiatedQuery {
                template_id: t.template_id.clone(),
                collection_id: db.collection_id.clone(),
                skill: t.skill,
                topic: t.topic,
                sql,
                bindings,
                draws: draw,
            });
        }
    }
    Err(reject(format!("empty result after {max_draws} draws")))
}

pub fn execute_query(db: &MetadataDatabase, sql: &str) -> Result<ResultTable, SqlError> {
    db.query(sql)
}

/// Row-major values joined by ", "; no rows is "NULL".
pub fn serialize_answer(r: &ResultTable) -> String {
    if r.rows.is_empty() {
        return "NULL".into();
    }
    r.values().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (expected train or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub instance_id: String,
    pub collection_id: String,
    pub level: Level,
    pub skill: Skill,
    pub topic: Topic,
    pub sql: String,
    pub question: String,
    pub gold_answer: String,
    pub split: Split,
    #[serde(default)]
    pub tie_affected: bool,
    pub subject: Subject,
}

pub fn instance_id(collection_id: &str, template_id: &str) -> String {
    format!("{collection_id}-{template_id}")
}
